#include "kcheck/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "kcheck/error.hpp"

namespace kcheck {

namespace detail {
const std::map<std::string, std::string>& embedded_templates();  // generated from data/templates
}

// ---------------------------------------------------------------- probability

ProbIndicator make_indicator(IndicatorKind kind) {
    return {kind, kind == IndicatorKind::Perplexity ? IndicatorDirection::HigherIsNegative
                                                    : IndicatorDirection::LowerIsNegative};
}

std::string_view indicator_name(IndicatorKind kind) {
    switch (kind) {
        case IndicatorKind::Perplexity: return "perplexity";
        case IndicatorKind::Lowest: return "lowest";
        case IndicatorKind::Average: return "average";
    }
    return "lowest";
}

IndicatorKind parse_indicator(std::string_view name) {
    if (name == "perplexity") return IndicatorKind::Perplexity;
    if (name == "lowest") return IndicatorKind::Lowest;
    if (name == "average") return IndicatorKind::Average;
    throw InputError("unknown probability indicator '" + std::string(name) + "'");
}

namespace {

void require_nonempty(const TokenScoreRecord& rec) {
    if (rec.logprobs.empty()) throw InputError("token score record '" + rec.id + "' has no logprobs");
}

}  // namespace

double perplexity(const TokenScoreRecord& rec) {
    require_nonempty(rec);
    double sum = 0.0;
    for (double lp : rec.logprobs) sum += lp;
    return std::exp(-sum / static_cast<double>(rec.logprobs.size()));
}

ProbScores prob_scores(const TokenScoreRecord& rec) {
    require_nonempty(rec);
    ProbScores s{std::numeric_limits<double>::infinity(), 0.0};
    for (double lp : rec.logprobs) {
        const double p = std::exp(lp);
        s.lowest = std::min(s.lowest, p);
        s.average += p;
    }
    s.average /= static_cast<double>(rec.logprobs.size());
    return s;
}

double indicator_score(const TokenScoreRecord& rec, IndicatorKind kind) {
    switch (kind) {
        case IndicatorKind::Perplexity: return perplexity(rec);
        case IndicatorKind::Lowest: return prob_scores(rec).lowest;
        case IndicatorKind::Average: return prob_scores(rec).average;
    }
    return 0.0;
}

std::vector<int> threshold_predictions(const std::vector<double>& scores, double threshold,
                                       const ProbIndicator& indicator) {
    std::vector<int> out;
    out.reserve(scores.size());
    for (double s : scores) {
        const bool positive =
            indicator.direction == IndicatorDirection::LowerIsNegative ? s > threshold : s < threshold;
        out.push_back(positive ? 1 : 0);
    }
    return out;
}

SweepResult sweep_best_accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                                const ProbIndicator& indicator) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw InputError("sweep: scores and labels must have the same nonzero length");
    }
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(scores[i]);
    if (pos.empty() || neg.empty()) throw InputError("sweep: both classes must be present");
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());

    std::vector<double> distinct(scores);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> candidates{-inf};
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) candidates.push_back(0.5 * (distinct[i] + distinct[i + 1]));
    candidates.push_back(inf);

    auto count_le = [](const std::vector<double>& v, double t) {
        return static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), t) - v.begin());
    };
    auto count_lt = [](const std::vector<double>& v, double t) {
        return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), t) - v.begin());
    };

    SweepResult best{-1.0, candidates.front()};
    const auto n = static_cast<double>(scores.size());
    for (double t : candidates) {
        std::size_t correct;
        if (indicator.direction == IndicatorDirection::LowerIsNegative) {
            correct = (pos.size() - count_le(pos, t)) + count_le(neg, t);
        } else {
            correct = count_lt(pos, t) + (neg.size() - count_lt(neg, t));
        }
        const double acc = static_cast<double>(correct) / n;
        if (acc > best.best_acc) best = {acc, t};
    }
    return best;
}

// ---------------------------------------------------------------- prompts

std::string_view prompt_kind_name(PromptKind kind) {
    switch (kind) {
        case PromptKind::Direct: return "direct";
        case PromptKind::Icl: return "icl";
        case PromptKind::Cot: return "cot";
    }
    return "direct";
}

PromptKind parse_prompt_kind(std::string_view name) {
    if (name == "direct") return PromptKind::Direct;
    if (name == "icl") return PromptKind::Icl;
    if (name == "cot") return PromptKind::Cot;
    throw InputError("unknown prompt style '" + std::string(name) + "' (expected direct|icl|cot)");
}

const std::string& template_text(std::string_view name) {
    const auto& all = detail::embedded_templates();
    auto it = all.find(std::string(name));
    if (it == all.end()) throw InputError("unknown template '" + std::string(name) + "'");
    return it->second;
}

std::vector<std::string> template_names() {
    std::vector<std::string> names;
    for (const auto& [k, v] : detail::embedded_templates()) names.push_back(k);
    return names;
}

PromptStyle prompt_style(Task task, PromptKind kind) {
    std::string prefix;
    switch (task) {
        case Task::T1Internal: prefix = "t1_"; break;
        case Task::T2InformedHelp:
        case Task::T3UninformedHelp: prefix = "help_"; break;
        case Task::T4Contradiction: prefix = "t4_"; break;
    }
    return {task, kind, template_text(prefix + std::string(prompt_kind_name(kind)))};
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size();) {
        const char c = tmpl[i];
        if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
            out += '{';
            i += 2;
        } else if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
            out += '}';
            i += 2;
        } else if (c == '{') {
            const auto close = tmpl.find('}', i + 1);
            if (close == std::string_view::npos) throw InputError("template has an unterminated slot");
            const std::string name(tmpl.substr(i + 1, close - i - 1));
            auto it = values.find(name);
            if (it == values.end()) throw InputError("no value for template slot '{" + name + "}'");
            out += it->second;
            i = close + 1;
        } else if (c == '}') {
            throw InputError("template has a stray '}'");
        } else {
            out += c;
            ++i;
        }
    }
    return out;
}

namespace {

bool needs_context(Task task) { return task != Task::T1Internal; }

void check_context(Task task, const std::optional<std::string>& context) {
    if (needs_context(task) && !context) {
        throw InputError("task " + std::string(task_code(task)) + " requires a context");
    }
    if (!needs_context(task) && context) throw InputError("task t1 does not take a context");
}

}  // namespace

std::string render_prompt(const PromptStyle& style, const std::string& question,
                          const std::optional<std::string>& context) {
    check_context(style.task, context);
    std::map<std::string, std::string> values{{"question", question}};
    if (context) values["context"] = *context;
    return fill_template(style.text, values);
}

std::string render_scenario(Task task, const std::string& question, const std::optional<std::string>& context) {
    check_context(task, context);
    if (!context) return fill_template(template_text("scenario_question"), {{"question", question}});
    return fill_template(template_text("scenario_context"), {{"question", question}, {"context", *context}});
}

std::string render_generation_prompt(const std::string& question, const std::vector<std::string>& contexts) {
    std::string out;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        out += "Context " + std::to_string(i + 1) + ": " + contexts[i] + "\n";
    }
    out += "Question:" + question + "\nAnswer:";
    return out;
}

std::string_view yes_no_name(YesNo v) {
    switch (v) {
        case YesNo::Yes: return "yes";
        case YesNo::No: return "no";
        case YesNo::Unparseable: return "unparseable";
    }
    return "unparseable";
}

YesNo parse_yes_no(std::string_view response) {
    std::size_t i = 0;
    auto is_end = [](char c) { return c == '.' || c == '!' || c == '?' || c == '\n'; };
    while (i < response.size() && !std::isalnum(static_cast<unsigned char>(response[i])) && !is_end(response[i])) ++i;
    std::string word;
    while (i < response.size() && std::isalpha(static_cast<unsigned char>(response[i]))) {
        word += static_cast<char>(std::tolower(static_cast<unsigned char>(response[i])));
        ++i;
    }
    if (word == "yes") return YesNo::Yes;
    if (word == "no") return YesNo::No;
    return YesNo::Unparseable;
}

// ---------------------------------------------------------------- generation

namespace {

Generation generation_from_json(const nlohmann::json& obj) {
    Generation g;
    g.text = obj.at("text").get<std::string>();
    if (auto it = obj.find("tokens"); it != obj.end() && !it->is_null()) g.tokens = it->get<std::vector<std::string>>();
    if (auto it = obj.find("logprobs"); it != obj.end() && !it->is_null()) {
        g.logprobs = it->get<std::vector<double>>();
    }
    return g;
}

}  // namespace

ReplayClient::ReplayClient(std::istream& in) {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto obj = nlohmann::json::parse(line);
            entries_[obj.at("prompt").get<std::string>()] = generation_from_json(obj);
        } catch (const nlohmann::json::exception& e) {
            throw InputError("replay file line " + std::to_string(n) + ": " + e.what());
        }
    }
}

ReplayClient ReplayClient::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open replay file '" + path + "'");
    return ReplayClient(in);
}

Generation ReplayClient::generate(const std::string& prompt) {
    auto it = entries_.find(prompt);
    if (it == entries_.end()) throw ModelError("replay file has no entry for the requested prompt");
    return it->second;
}

EchoClient EchoClient::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open echo memory file '" + path + "'");
    std::map<std::string, std::string> memory;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto obj = nlohmann::json::parse(line);
            memory[obj.at("question").get<std::string>()] = obj.at("answer").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw InputError("echo memory file: " + std::string(e.what()));
        }
    }
    return EchoClient(std::move(memory));
}

Generation EchoClient::generate(const std::string& prompt) {
    static const std::string kContext = "Context 1: ";
    static const std::string kMarker = "answer is ";
    static const std::string kQuestion = "Question:";
    if (auto c = prompt.find(kContext); c != std::string::npos) {
        const auto start = c + kContext.size();
        const std::string context = prompt.substr(start, prompt.find('\n', start) - start);
        if (auto m = context.find(kMarker); m != std::string::npos) {
            const auto a = m + kMarker.size();
            return {context.substr(a, context.find('.', a) - a), std::nullopt, std::nullopt};
        }
        return {"I don't know", std::nullopt, std::nullopt};
    }
    if (auto q = prompt.rfind(kQuestion); q != std::string::npos) {
        auto start = q + kQuestion.size();
        while (start < prompt.size() && prompt[start] == ' ') ++start;
        const std::string question = prompt.substr(start, prompt.find('\n', start) - start);
        if (auto it = memory_.find(question); it != memory_.end()) return {it->second, std::nullopt, std::nullopt};
    }
    return {"I don't know", std::nullopt, std::nullopt};
}

std::unique_ptr<GenerationClient> make_client(const std::string& spec) {
    if (spec.rfind("replay:", 0) == 0) return std::make_unique<ReplayClient>(ReplayClient::from_file(spec.substr(7)));
    if (spec == "echo") return std::make_unique<EchoClient>();
    if (spec.rfind("echo:", 0) == 0) return std::make_unique<EchoClient>(EchoClient::from_file(spec.substr(5)));
    if (spec.rfind("http://", 0) == 0) return std::make_unique<HttpGenerationClient>(spec);
    throw InputError("unrecognized generation client '" + spec + "' (expected replay:<file>, echo[:<file>] or http://...)");
}

// ---------------------------------------------------------------- answer-based

AnswerCheck answer_based_check(PromptKind kind, const CheckItem& item, GenerationClient& client,
                               UnparseablePolicy policy) {
    const std::string prompt = render_prompt(prompt_style(item.task, kind), item.question, item.context);
    AnswerCheck out;
    try {
        out.response = client.generate(prompt).text;
    } catch (const std::exception& e) {
        throw ModelError("generation failed for item '" + item.id + "': " + e.what());
    }
    out.parsed = parse_yes_no(out.response);
    switch (out.parsed) {
        case YesNo::Yes: out.label = 1; break;
        case YesNo::No: out.label = 0; break;
        case YesNo::Unparseable:
            if (policy == UnparseablePolicy::CountNegative) out.label = 0;
            break;
    }
    return out;
}

}  // namespace kcheck
