#pragma once

// Probability-based and answer-based knowledge-checking baselines.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kcheck/repstore.hpp"

namespace kcheck {

// ---------------------------------------------------------------- probability

enum class IndicatorKind { Perplexity, Lowest, Average };
enum class IndicatorDirection { HigherIsNegative, LowerIsNegative };

struct ProbIndicator {
    IndicatorKind kind = IndicatorKind::Lowest;
    IndicatorDirection direction = IndicatorDirection::LowerIsNegative;
};

// Perplexity flags high values as negative; lowest/average flag low values.
ProbIndicator make_indicator(IndicatorKind kind);
std::string_view indicator_name(IndicatorKind kind);
IndicatorKind parse_indicator(std::string_view name);

double perplexity(const TokenScoreRecord& rec);  // exp(-mean logprob)

struct ProbScores {
    double lowest = 0.0;
    double average = 0.0;
};
ProbScores prob_scores(const TokenScoreRecord& rec);

double indicator_score(const TokenScoreRecord& rec, IndicatorKind kind);

struct SweepResult {
    double best_acc = 0.0;
    double best_threshold = 0.0;  // may be +-inf
};

/// Exhaustive threshold sweep over -inf, the midpoints between adjacent
/// distinct scores, and +inf. With LowerIsNegative a sample is predicted
/// positive iff score > t; with HigherIsNegative iff score < t. Returns the
/// best accuracy and the smallest threshold achieving it.
SweepResult sweep_best_accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                                const ProbIndicator& indicator);

// Predictions at a fixed threshold under the sweep's rule.
std::vector<int> threshold_predictions(const std::vector<double>& scores, double threshold,
                                       const ProbIndicator& indicator);

// ---------------------------------------------------------------- prompts

enum class PromptKind { Direct, Icl, Cot };

std::string_view prompt_kind_name(PromptKind kind);
PromptKind parse_prompt_kind(std::string_view name);

struct PromptStyle {
    Task task = Task::T1Internal;
    PromptKind kind = PromptKind::Direct;
    std::string text;  // template with {question} / {context} slots
};

// Shipped checking templates: T1 internal knowledge, T2/T3 helpfulness,
// T4 belief alignment (context only).
PromptStyle prompt_style(Task task, PromptKind kind);

// Named template asset (file stem under data/templates).
const std::string& template_text(std::string_view name);
std::vector<std::string> template_names();

/// Single-pass substitution: "{name}" is replaced by values.at(name),
/// "{{" and "}}" produce literal braces. Unknown slots and stray braces
/// throw InputError. Substituted text is never re-scanned.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// Renders a checking prompt. Context must be present exactly for T2-T4.
std::string render_prompt(const PromptStyle& style, const std::string& question,
                          const std::optional<std::string>& context);

// Representation / probability scenario input ("Question: ...\nAnswer:").
std::string render_scenario(Task task, const std::string& question, const std::optional<std::string>& context);

// Final answering prompt: "Context i: ..." lines, then "Question:...\nAnswer:".
std::string render_generation_prompt(const std::string& question, const std::vector<std::string>& contexts);

enum class YesNo { Yes, No, Unparseable };
std::string_view yes_no_name(YesNo v);

// Case-insensitive check of the first word of the first sentence.
YesNo parse_yes_no(std::string_view response);

// ---------------------------------------------------------------- generation

struct Generation {
    std::string text;
    std::optional<std::vector<std::string>> tokens;
    std::optional<std::vector<double>> logprobs;
};

class GenerationClient {
public:
    virtual ~GenerationClient() = default;
    // Throws ModelError on failure.
    virtual Generation generate(const std::string& prompt) = 0;
};

// Wraps a callable; used for deterministic mocks.
class FunctionClient : public GenerationClient {
public:
    explicit FunctionClient(std::function<Generation(const std::string&)> fn) : fn_(std::move(fn)) {}
    Generation generate(const std::string& prompt) override { return fn_(prompt); }

private:
    std::function<Generation(const std::string&)> fn_;
};

/// Replays recorded generations. File format: JSON Lines of
/// {prompt, text, tokens?, logprobs?}; a prompt without an entry is a
/// ModelError.
class ReplayClient : public GenerationClient {
public:
    explicit ReplayClient(std::istream& in);
    static ReplayClient from_file(const std::string& path);
    Generation generate(const std::string& prompt) override;
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, Generation> entries_;
};

/// POSTs {prompt, max_tokens, temperature: 0} as JSON to `url` and expects
/// {text, tokens?, logprobs?} back.
class HttpGenerationClient : public GenerationClient {
public:
    explicit HttpGenerationClient(std::string url, int max_tokens = 64, double timeout_s = 60.0);
    Generation generate(const std::string& prompt) override;

private:
    std::string base_;
    std::string path_;
    int max_tokens_;
    double timeout_s_;
};

/// Test double for QA fixtures. With a context in the prompt it answers
/// with the text following "answer is " in Context 1 (up to the next '.');
/// without one it answers from `memory` (question -> answer) or says
/// "I don't know".
class EchoClient : public GenerationClient {
public:
    explicit EchoClient(std::map<std::string, std::string> memory = {}) : memory_(std::move(memory)) {}
    static EchoClient from_file(const std::string& path);  // JSON Lines {question, answer}
    Generation generate(const std::string& prompt) override;

private:
    std::map<std::string, std::string> memory_;
};

/// "replay:<file>", "echo", "echo:<memory file>" or an http:// URL.
std::unique_ptr<GenerationClient> make_client(const std::string& spec);

// ---------------------------------------------------------------- answer-based

enum class UnparseablePolicy { CountNegative, Exclude };

struct CheckItem {
    std::string id;
    Task task = Task::T1Internal;
    std::string question;
    std::optional<std::string> context;
};

struct AnswerCheck {
    YesNo parsed = YesNo::Unparseable;
    std::optional<int> label;  // empty when excluded
    std::string response;
};

/// render -> generate -> parse. "yes" is the positive class (known,
/// helpful, aligned). Client failures are rethrown as ModelError naming
/// the item id.
AnswerCheck answer_based_check(PromptKind kind, const CheckItem& item, GenerationClient& client,
                               UnparseablePolicy policy = UnparseablePolicy::CountNegative);

}  // namespace kcheck
