#pragma once

// Neutral data model and JSON Lines formats for representations (RVF),
// token scores (TSF), queries and passages.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kcheck {

enum class Task { T1Internal, T2InformedHelp, T3UninformedHelp, T4Contradiction };

std::string_view task_code(Task task);  // "t1" .. "t4"
Task parse_task(std::string_view code);  // throws InputError

struct RepresentationRecord {
    std::string id;
    Task task = Task::T1Internal;
    int label = 0;  // 1 = positive sample, 0 = negative sample
    std::string model;
    int layer = 0;
    int dim = 0;
    std::vector<double> vec;
    std::map<std::string, std::string> meta;

    bool operator==(const RepresentationRecord&) const = default;
};

struct TokenScoreRecord {
    std::string id;
    std::vector<std::string> tokens;
    std::vector<double> logprobs;  // natural log, each <= 0

    bool operator==(const TokenScoreRecord&) const = default;
};

enum class QueryCategory { Clean, Noisy };

struct QueryRecord {
    std::string id;
    std::string question;
    std::vector<std::string> gold_answers;
    QueryCategory category = QueryCategory::Clean;
    std::optional<int> known_hint;

    bool operator==(const QueryRecord&) const = default;
};

enum class PassageKind { Helpful, Unhelpful, Misleading, Unknown };

std::string_view passage_kind_name(PassageKind kind);
PassageKind parse_passage_kind(std::string_view name);

struct PassageRecord {
    std::string pid;
    std::string text;
    PassageKind kind = PassageKind::Unknown;
    std::optional<double> retrieval_score;

    bool operator==(const PassageRecord&) const = default;
};

// Raw corpus document, segmented into passages by the RAG harness.
struct CorpusDoc {
    std::string doc_id;
    std::string text;

    bool operator==(const CorpusDoc&) const = default;
};

struct SplitSpec {
    std::size_t n_train_per_class = 100;
    std::uint64_t seed = 0;
};

// Readers validate every line and report failures as InputError with the
// 1-based line number. Blank lines are skipped.
std::vector<RepresentationRecord> read_representations(std::istream& in);
std::vector<TokenScoreRecord> read_token_scores(std::istream& in);
std::vector<QueryRecord> read_queries(std::istream& in);
std::vector<PassageRecord> read_passages(std::istream& in);
std::vector<CorpusDoc> read_corpus(std::istream& in);

void write_records(const std::vector<RepresentationRecord>& records, std::ostream& out);
void write_records(const std::vector<TokenScoreRecord>& records, std::ostream& out);
void write_records(const std::vector<QueryRecord>& records, std::ostream& out);
void write_records(const std::vector<PassageRecord>& records, std::ostream& out);

// Path helpers; a missing file is an InputError.
std::vector<RepresentationRecord> load_representations(const std::string& path);
std::vector<TokenScoreRecord> load_token_scores(const std::string& path);
std::vector<QueryRecord> load_queries(const std::string& path);
std::vector<PassageRecord> load_passages(const std::string& path);
std::vector<CorpusDoc> load_corpus(const std::string& path);

template <typename Record>
void save_records(const std::vector<Record>& records, const std::string& path);

/// Seeded per-class split. Positives are shuffled first, then negatives, on
/// one SplitMix64 stream; the first n of each shuffled class form the train
/// set. Both outputs keep input order.
std::pair<std::vector<RepresentationRecord>, std::vector<RepresentationRecord>>
split_train_eval(const std::vector<RepresentationRecord>& records, const SplitSpec& spec);

// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace kcheck
