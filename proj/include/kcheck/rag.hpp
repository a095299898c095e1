#pragma once

// Retrieval-augmented QA harness with representation-based context filtering.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kcheck/baselines.hpp"
#include "kcheck/checker.hpp"
#include "kcheck/error.hpp"
#include "kcheck/repstore.hpp"

namespace kcheck {

inline constexpr std::size_t kWordsPerPassage = 100;

// Maximal runs of non-whitespace characters.
std::vector<std::string> split_words(std::string_view text);

/// Non-overlapping chunks of `words_per_passage` words joined by single
/// spaces; the last chunk may be shorter. Pids are "<doc_id>#<n>" from 0.
/// Corpus text is never injected, so passages get kind Unhelpful and their
/// per-query helpfulness is decided by gold-answer containment.
std::vector<PassageRecord> segment_corpus(const CorpusDoc& doc, std::size_t words_per_passage = kWordsPerPassage);

struct ScoredPid {
    std::string pid;
    double score = 0.0;
};

/// Exact inner-product search. Ties rank by pid, lexicographically.
class RetrievalIndex {
public:
    void add(std::string pid, Vec embedding);  // duplicate pid or dim mismatch -> InputError
    std::vector<ScoredPid> retrieve(const Vec& query, std::size_t k) const;

    std::size_t size() const { return pids_.size(); }
    int dim() const { return dim_; }

private:
    std::vector<std::string> pids_;
    std::vector<Vec> embeddings_;
    std::map<std::string, std::size_t> slot_;
    int dim_ = 0;
};

// Index of RVF embedding records keyed by record id.
RetrievalIndex build_index(const std::vector<RepresentationRecord>& embeddings);

/// True iff `text` contains wrong_answer and none of true_answers, all
/// compared case-insensitively.
bool validate_misleading(std::string_view text, std::string_view wrong_answer,
                         const std::vector<std::string>& true_answers);

// Lowercase and collapse whitespace runs to one space, trimmed.
std::string normalize_answer(std::string_view text);

// Any normalized gold answer is a substring of the normalized output.
bool exact_match(std::string_view answer, const std::vector<std::string>& gold_answers);

/// Role of a passage as context for one query: misleading for injected
/// passages, unknown when the passage carries no kind, otherwise helpful
/// iff it contains a gold answer.
PassageKind context_kind(const QueryRecord& query, const PassageRecord& passage);

// ---------------------------------------------------------------- checking

struct RepKey {
    Task task = Task::T1Internal;
    std::string query_id;
    std::string pid;  // empty for T1

    auto operator<=>(const RepKey&) const = default;
    std::string describe() const;
};

/// Scenario vectors from RVF records: meta "query_id" (and "pid" for
/// T2-T4) plus the record task form the key.
class RepresentationProvider {
public:
    RepresentationProvider() = default;
    explicit RepresentationProvider(const std::vector<RepresentationRecord>& records);

    const Vec* find(const RepKey& key) const;
    std::size_t size() const { return vectors_.size(); }

private:
    std::map<RepKey, Vec> vectors_;
};

class CheckerSuite {
public:
    virtual ~CheckerSuite() = default;

    // 1 = known / helpful / aligned. `passage` is null for T1.
    virtual int check(Task task, const QueryRecord& query, const PassageRecord* passage) = 0;

    // Keys this suite would need for `query` over `docs` but cannot find.
    virtual std::vector<RepKey> missing(const QueryRecord&, const std::vector<const PassageRecord*>&) { return {}; }
};

// Ground truth: known_hint for T1, context_kind for the rest.
class OracleCheckers : public CheckerSuite {
public:
    int check(Task task, const QueryRecord& query, const PassageRecord* passage) override;
};

class TrainedCheckers : public CheckerSuite {
public:
    // Checkers in task order t1..t4; each must be trained for its task.
    TrainedCheckers(std::array<AnyChecker, 4> checkers, const RepresentationProvider& reps);

    int check(Task task, const QueryRecord& query, const PassageRecord* passage) override;
    std::vector<RepKey> missing(const QueryRecord& query, const std::vector<const PassageRecord*>& docs) override;

private:
    std::array<AnyChecker, 4> checkers_;
    const RepresentationProvider& reps_;
};

class MissingRepresentations : public ModelError {
public:
    explicit MissingRepresentations(std::vector<RepKey> keys);
    const std::vector<RepKey>& keys() const { return keys_; }

private:
    std::vector<RepKey> keys_;
};

struct FilterVerdict {
    std::string pid;
    bool helpful = false;
    std::optional<bool> contradictory;  // only for predicted-known queries
    bool kept = false;
};

struct FilterResult {
    bool known = false;
    std::vector<FilterVerdict> verdicts;  // one per doc, retrieval order
    std::vector<std::string> kept;        // at most k_keep, retrieval order
};

/// T1 decides known/unknown; helpfulness comes from T2 when known and T3
/// otherwise; T4 runs only for known queries. Unhelpful or contradictory
/// docs are dropped and the first k_keep survivors are kept.
FilterResult filter_contexts(const QueryRecord& query, const std::vector<const PassageRecord*>& docs,
                             CheckerSuite& checkers, std::size_t k_keep = 2);

// ---------------------------------------------------------------- runs

enum class FilterMode { Off, On, Oracle };
std::string_view filter_mode_name(FilterMode mode);
FilterMode parse_filter_mode(std::string_view name);

struct RunConfig {
    std::size_t k_retrieve = 10;
    std::size_t k_keep = 2;
    FilterMode filtering = FilterMode::On;
    bool retrieval = true;  // false: answer every query without context
};

struct KindCounts {
    std::size_t helpful = 0;
    std::size_t unhelpful = 0;
    std::size_t misleading = 0;
    std::size_t unknown = 0;

    void add(PassageKind kind);
    bool operator==(const KindCounts&) const = default;
};

struct QueryOutcome {
    std::string id;
    QueryCategory category = QueryCategory::Clean;
    std::optional<bool> predicted_known;  // absent when not filtering
    std::vector<std::string> retrieved;
    std::vector<std::string> used;  // contexts placed in the prompt
    std::vector<FilterVerdict> verdicts;
    std::string answer;
    bool correct = false;
    std::optional<std::string> error;  // generation failure; excluded from accuracy
};

struct RunReport {
    RunConfig config;
    double noisy_acc = 0.0;  // 0 when no noisy query was answered
    double clean_acc = 0.0;
    std::size_t n_noisy = 0;  // answered queries per category
    std::size_t n_clean = 0;
    std::size_t n_failed = 0;
    KindCounts distribution_before;  // unfiltered top-k_keep
    KindCounts distribution_after;   // contexts actually used
    std::vector<QueryOutcome> queries;
};

struct RunInputs {
    const std::vector<QueryRecord>* queries = nullptr;
    const std::map<std::string, PassageRecord>* passages = nullptr;  // by pid
    const RetrievalIndex* index = nullptr;
    const std::map<std::string, Vec>* query_embeddings = nullptr;  // by query id
};

/// Per query: retrieve, filter (per config), prompt with the surviving
/// contexts, generate and score by exact match. Queries are processed in
/// input order. `checkers` may be null only when filtering is Off. Missing
/// representations for any query abort the run up front with
/// MissingRepresentations listing every gap.
RunReport evaluate_run(const RunInputs& inputs, CheckerSuite* checkers, GenerationClient& client,
                       const RunConfig& config);

nlohmann::ordered_json report_to_json(const RunReport& report);
void write_summary_csv(const RunReport& report, std::ostream& out);       // one row
void write_distribution_csv(const RunReport& report, std::ostream& out);  // before / after rows
void write_queries_csv(const RunReport& report, std::ostream& out);

// RFC 4180 quoting when the field needs it.
std::string csv_field(std::string_view text);

}  // namespace kcheck
