#include "kcheck/rag.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <ostream>

#include "kcheck/metrics.hpp"

namespace kcheck {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string lowercase(std::string_view text) {
    std::string out(text);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
    return lowercase(haystack).find(lowercase(needle)) != std::string::npos;
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) words.emplace_back(text.substr(start, i - start));
    }
    return words;
}

std::vector<PassageRecord> segment_corpus(const CorpusDoc& doc, std::size_t words_per_passage) {
    if (words_per_passage == 0) throw InputError("segment_corpus: words per passage must be positive");
    const auto words = split_words(doc.text);
    std::vector<PassageRecord> out;
    for (std::size_t start = 0; start < words.size(); start += words_per_passage) {
        const std::size_t end = std::min(words.size(), start + words_per_passage);
        PassageRecord p;
        p.pid = doc.doc_id + "#" + std::to_string(out.size());
        for (std::size_t w = start; w < end; ++w) {
            if (w > start) p.text += ' ';
            p.text += words[w];
        }
        p.kind = PassageKind::Unhelpful;
        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------- retrieval

void RetrievalIndex::add(std::string pid, Vec embedding) {
    if (embedding.size() == 0) throw InputError("index: empty embedding for '" + pid + "'");
    if (pids_.empty()) {
        dim_ = static_cast<int>(embedding.size());
    } else if (embedding.size() != dim_) {
        throw InputError("index: embedding for '" + pid + "' has dimension " + std::to_string(embedding.size()) +
                         ", expected " + std::to_string(dim_));
    }
    if (!slot_.emplace(pid, pids_.size()).second) throw InputError("index: duplicate pid '" + pid + "'");
    pids_.push_back(std::move(pid));
    embeddings_.push_back(std::move(embedding));
}

std::vector<ScoredPid> RetrievalIndex::retrieve(const Vec& query, std::size_t k) const {
    if (pids_.empty()) throw InputError("retrieve: index is empty");
    if (k == 0) throw InputError("retrieve: k must be at least 1");
    if (query.size() != dim_) {
        throw InputError("retrieve: query dimension " + std::to_string(query.size()) + " does not match index " +
                         std::to_string(dim_));
    }
    std::vector<double> scores(pids_.size());
    for (std::size_t i = 0; i < pids_.size(); ++i) scores[i] = embeddings_[i].dot(query);

    std::vector<std::size_t> order(pids_.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t top = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return pids_[a] < pids_[b];
                      });
    std::vector<ScoredPid> out;
    out.reserve(top);
    for (std::size_t i = 0; i < top; ++i) out.push_back({pids_[order[i]], scores[order[i]]});
    return out;
}

RetrievalIndex build_index(const std::vector<RepresentationRecord>& embeddings) {
    RetrievalIndex index;
    for (const auto& r : embeddings) index.add(r.id, to_eigen(r.vec));
    return index;
}

// ---------------------------------------------------------------- text rules

bool validate_misleading(std::string_view text, std::string_view wrong_answer,
                         const std::vector<std::string>& true_answers) {
    if (wrong_answer.empty()) throw InputError("validate_misleading: wrong answer is empty");
    if (true_answers.empty()) throw InputError("validate_misleading: no true answers given");
    if (!contains_ci(text, wrong_answer)) return false;
    return std::none_of(true_answers.begin(), true_answers.end(),
                        [&](const std::string& t) { return contains_ci(text, t); });
}

std::string normalize_answer(std::string_view text) {
    std::string out;
    for (const auto& w : split_words(lowercase(text))) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

bool exact_match(std::string_view answer, const std::vector<std::string>& gold_answers) {
    if (gold_answers.empty()) throw InputError("exact_match: gold answer list is empty");
    const std::string norm = normalize_answer(answer);
    return std::any_of(gold_answers.begin(), gold_answers.end(), [&](const std::string& g) {
        return norm.find(normalize_answer(g)) != std::string::npos;
    });
}

PassageKind context_kind(const QueryRecord& query, const PassageRecord& passage) {
    if (passage.kind == PassageKind::Misleading || passage.kind == PassageKind::Unknown) return passage.kind;
    const std::string norm = normalize_answer(passage.text);
    for (const auto& g : query.gold_answers) {
        if (norm.find(normalize_answer(g)) != std::string::npos) return PassageKind::Helpful;
    }
    return PassageKind::Unhelpful;
}

// ---------------------------------------------------------------- checking

std::string RepKey::describe() const {
    std::string s = "(query " + query_id;
    if (!pid.empty()) s += ", passage " + pid;
    return s + ", " + std::string(task_code(task)) + ")";
}

RepresentationProvider::RepresentationProvider(const std::vector<RepresentationRecord>& records) {
    for (const auto& r : records) {
        RepKey key{r.task, "", ""};
        auto q = r.meta.find("query_id");
        if (q == r.meta.end()) throw InputError("representation '" + r.id + "' has no meta.query_id");
        key.query_id = q->second;
        if (r.task != Task::T1Internal) {
            auto p = r.meta.find("pid");
            if (p == r.meta.end()) throw InputError("representation '" + r.id + "' has no meta.pid");
            key.pid = p->second;
        }
        if (!vectors_.emplace(key, to_eigen(r.vec)).second) {
            throw InputError("duplicate representation for " + key.describe());
        }
    }
}

const Vec* RepresentationProvider::find(const RepKey& key) const {
    auto it = vectors_.find(key);
    return it == vectors_.end() ? nullptr : &it->second;
}

int OracleCheckers::check(Task task, const QueryRecord& query, const PassageRecord* passage) {
    if (task == Task::T1Internal) {
        if (!query.known_hint) throw InputError("oracle filtering needs known_hint for query '" + query.id + "'");
        return *query.known_hint;
    }
    if (!passage) throw InputError("oracle check for " + std::string(task_code(task)) + " needs a passage");
    const PassageKind kind = context_kind(query, *passage);
    if (task == Task::T4Contradiction) return kind == PassageKind::Misleading ? 0 : 1;
    return kind == PassageKind::Helpful ? 1 : 0;
}

TrainedCheckers::TrainedCheckers(std::array<AnyChecker, 4> checkers, const RepresentationProvider& reps)
    : checkers_(std::move(checkers)), reps_(reps) {
    for (int t = 0; t < 4; ++t) {
        const Task want = static_cast<Task>(t);
        if (checker_task(checkers_[t]) != want) {
            throw InputError("checker in slot " + std::string(task_code(want)) + " was trained for " +
                             std::string(task_code(checker_task(checkers_[t]))));
        }
    }
}

int TrainedCheckers::check(Task task, const QueryRecord& query, const PassageRecord* passage) {
    const RepKey key{task, query.id, passage ? passage->pid : std::string()};
    const Vec* v = reps_.find(key);
    if (!v) throw MissingRepresentations({key});
    return classify(checkers_[static_cast<int>(task)], *v).label;
}

std::vector<RepKey> TrainedCheckers::missing(const QueryRecord& query, const std::vector<const PassageRecord*>& docs) {
    const RepKey t1{Task::T1Internal, query.id, ""};
    const Vec* v = reps_.find(t1);
    if (!v) return {t1};
    const bool known = classify(checkers_[0], *v).label == 1;
    std::vector<RepKey> gaps;
    for (const PassageRecord* doc : docs) {
        const RepKey help{known ? Task::T2InformedHelp : Task::T3UninformedHelp, query.id, doc->pid};
        if (!reps_.find(help)) gaps.push_back(help);
        if (known) {
            const RepKey contra{Task::T4Contradiction, query.id, doc->pid};
            if (!reps_.find(contra)) gaps.push_back(contra);
        }
    }
    return gaps;
}

namespace {

std::string describe_all(const std::vector<RepKey>& keys) {
    std::string s = std::to_string(keys.size()) + " missing representation(s):";
    for (const auto& k : keys) s += "\n  " + k.describe();
    return s;
}

}  // namespace

MissingRepresentations::MissingRepresentations(std::vector<RepKey> keys)
    : ModelError(describe_all(keys)), keys_(std::move(keys)) {}

FilterResult filter_contexts(const QueryRecord& query, const std::vector<const PassageRecord*>& docs,
                             CheckerSuite& checkers, std::size_t k_keep) {
    FilterResult result;
    result.known = checkers.check(Task::T1Internal, query, nullptr) == 1;
    const Task help_task = result.known ? Task::T2InformedHelp : Task::T3UninformedHelp;
    for (const PassageRecord* doc : docs) {
        FilterVerdict v;
        v.pid = doc->pid;
        v.helpful = checkers.check(help_task, query, doc) == 1;
        if (result.known) v.contradictory = checkers.check(Task::T4Contradiction, query, doc) == 0;
        v.kept = v.helpful && !v.contradictory.value_or(false) && result.kept.size() < k_keep;
        if (v.kept) result.kept.push_back(v.pid);
        result.verdicts.push_back(std::move(v));
    }
    return result;
}

// ---------------------------------------------------------------- runs

std::string_view filter_mode_name(FilterMode mode) {
    switch (mode) {
        case FilterMode::Off: return "off";
        case FilterMode::On: return "on";
        case FilterMode::Oracle: return "oracle";
    }
    return "off";
}

FilterMode parse_filter_mode(std::string_view name) {
    if (name == "off") return FilterMode::Off;
    if (name == "on") return FilterMode::On;
    if (name == "oracle") return FilterMode::Oracle;
    throw InputError("unknown filtering mode '" + std::string(name) + "' (expected on|off|oracle)");
}

void KindCounts::add(PassageKind kind) {
    switch (kind) {
        case PassageKind::Helpful: ++helpful; break;
        case PassageKind::Unhelpful: ++unhelpful; break;
        case PassageKind::Misleading: ++misleading; break;
        case PassageKind::Unknown: ++unknown; break;
    }
}

namespace {

std::vector<const PassageRecord*> resolve(const std::vector<ScoredPid>& hits,
                                          const std::map<std::string, PassageRecord>& passages) {
    std::vector<const PassageRecord*> docs;
    for (const auto& h : hits) {
        auto it = passages.find(h.pid);
        if (it == passages.end()) throw InputError("retrieved pid '" + h.pid + "' has no passage text");
        docs.push_back(&it->second);
    }
    return docs;
}

}  // namespace

RunReport evaluate_run(const RunInputs& inputs, CheckerSuite* checkers, GenerationClient& client,
                       const RunConfig& config) {
    if (!inputs.queries || !inputs.passages) throw InputError("evaluate_run: queries and passages are required");
    if (config.retrieval && (!inputs.index || !inputs.query_embeddings)) {
        throw InputError("evaluate_run: retrieval needs an index and query embeddings");
    }
    if (config.k_keep == 0 || config.k_retrieve == 0) throw InputError("evaluate_run: k values must be positive");
    const bool filtering = config.retrieval && config.filtering != FilterMode::Off;
    if (filtering && !checkers) throw InputError("evaluate_run: filtering needs checkers");

    RunReport report;
    report.config = config;

    // Retrieval first, so representation gaps surface before any generation.
    std::vector<std::vector<const PassageRecord*>> retrieved(inputs.queries->size());
    if (config.retrieval) {
        std::vector<RepKey> gaps;
        for (std::size_t i = 0; i < inputs.queries->size(); ++i) {
            const QueryRecord& q = (*inputs.queries)[i];
            auto emb = inputs.query_embeddings->find(q.id);
            if (emb == inputs.query_embeddings->end()) throw InputError("query '" + q.id + "' has no embedding");
            retrieved[i] = resolve(inputs.index->retrieve(emb->second, config.k_retrieve), *inputs.passages);
            if (filtering) {
                auto g = checkers->missing(q, retrieved[i]);
                gaps.insert(gaps.end(), g.begin(), g.end());
            }
        }
        if (!gaps.empty()) throw MissingRepresentations(std::move(gaps));
    }

    std::size_t correct_noisy = 0, correct_clean = 0;
    for (std::size_t i = 0; i < inputs.queries->size(); ++i) {
        const QueryRecord& q = (*inputs.queries)[i];
        QueryOutcome out;
        out.id = q.id;
        out.category = q.category;
        const auto& docs = retrieved[i];
        for (const PassageRecord* d : docs) out.retrieved.push_back(d->pid);

        std::vector<const PassageRecord*> used;
        if (filtering) {
            FilterResult fr = filter_contexts(q, docs, *checkers, config.k_keep);
            out.predicted_known = fr.known;
            for (const auto& pid : fr.kept) used.push_back(&inputs.passages->at(pid));
            out.verdicts = std::move(fr.verdicts);
        } else {
            used.assign(docs.begin(), docs.begin() + static_cast<std::ptrdiff_t>(std::min(config.k_keep, docs.size())));
        }

        std::vector<std::string> contexts;
        for (const PassageRecord* d : used) {
            out.used.push_back(d->pid);
            contexts.push_back(d->text);
        }
        try {
            out.answer = client.generate(render_generation_prompt(q.question, contexts)).text;
        } catch (const std::exception& e) {
            out.error = e.what();
        }
        if (out.error) {
            ++report.n_failed;
        } else {
            for (std::size_t j = 0; j < std::min(config.k_keep, docs.size()); ++j) {
                report.distribution_before.add(context_kind(q, *docs[j]));
            }
            for (const PassageRecord* d : used) report.distribution_after.add(context_kind(q, *d));
            out.correct = exact_match(out.answer, q.gold_answers);
            if (q.category == QueryCategory::Noisy) {
                ++report.n_noisy;
                correct_noisy += out.correct;
            } else {
                ++report.n_clean;
                correct_clean += out.correct;
            }
        }
        report.queries.push_back(std::move(out));
    }
    if (report.n_noisy) report.noisy_acc = static_cast<double>(correct_noisy) / static_cast<double>(report.n_noisy);
    if (report.n_clean) report.clean_acc = static_cast<double>(correct_clean) / static_cast<double>(report.n_clean);
    return report;
}

namespace {

nlohmann::ordered_json counts_json(const KindCounts& c) {
    return {{"helpful", c.helpful}, {"unhelpful", c.unhelpful}, {"misleading", c.misleading}, {"unknown", c.unknown}};
}

std::string_view category_name(QueryCategory c) { return c == QueryCategory::Noisy ? "noisy" : "clean"; }

std::string join(const std::vector<std::string>& items, char sep) {
    std::string s;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) s += sep;
        s += items[i];
    }
    return s;
}

}  // namespace

nlohmann::ordered_json report_to_json(const RunReport& report) {
    nlohmann::ordered_json doc;
    doc["config"] = {{"k_retrieve", report.config.k_retrieve},
                     {"k_keep", report.config.k_keep},
                     {"filtering", filter_mode_name(report.config.filtering)},
                     {"retrieval", report.config.retrieval}};
    doc["noisy_acc"] = report.noisy_acc;
    doc["clean_acc"] = report.clean_acc;
    doc["n_noisy"] = report.n_noisy;
    doc["n_clean"] = report.n_clean;
    doc["n_failed"] = report.n_failed;
    doc["distribution_before"] = counts_json(report.distribution_before);
    doc["distribution_after"] = counts_json(report.distribution_after);
    auto& rows = doc["queries"] = nlohmann::ordered_json::array();
    for (const auto& q : report.queries) {
        nlohmann::ordered_json row;
        row["id"] = q.id;
        row["category"] = category_name(q.category);
        row["predicted_known"] = q.predicted_known ? nlohmann::ordered_json(*q.predicted_known) : nullptr;
        row["retrieved"] = q.retrieved;
        row["used"] = q.used;
        auto& verdicts = row["verdicts"] = nlohmann::ordered_json::array();
        for (const auto& v : q.verdicts) {
            nlohmann::ordered_json jv{{"pid", v.pid}, {"helpful", v.helpful}};
            if (v.contradictory) jv["contradictory"] = *v.contradictory;
            jv["kept"] = v.kept;
            verdicts.push_back(std::move(jv));
        }
        row["answer"] = q.answer;
        row["correct"] = q.correct;
        row["error"] = q.error ? nlohmann::ordered_json(*q.error) : nullptr;
        rows.push_back(std::move(row));
    }
    return doc;
}

std::string csv_field(std::string_view text) {
    if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void write_summary_csv(const RunReport& report, std::ostream& out) {
    out << "filtering,retrieval,noisy_acc,clean_acc,n_noisy,n_clean,n_failed\n";
    out << filter_mode_name(report.config.filtering) << ',' << (report.config.retrieval ? "on" : "off") << ','
        << csv_number(report.noisy_acc) << ',' << csv_number(report.clean_acc) << ',' << report.n_noisy << ','
        << report.n_clean << ',' << report.n_failed << '\n';
}

void write_distribution_csv(const RunReport& report, std::ostream& out) {
    out << "stage,helpful,unhelpful,misleading,unknown\n";
    for (const auto& [stage, c] : {std::pair{"before", report.distribution_before},
                                   std::pair{"after", report.distribution_after}}) {
        out << stage << ',' << c.helpful << ',' << c.unhelpful << ',' << c.misleading << ',' << c.unknown << '\n';
    }
}

void write_queries_csv(const RunReport& report, std::ostream& out) {
    out << "id,category,predicted_known,used,correct,answer,error\n";
    for (const auto& q : report.queries) {
        out << csv_field(q.id) << ',' << category_name(q.category) << ','
            << (q.predicted_known ? (*q.predicted_known ? "1" : "0") : "") << ',' << csv_field(join(q.used, ';'))
            << ',' << (q.correct ? 1 : 0) << ',' << csv_field(q.answer) << ',' << csv_field(q.error.value_or(""))
            << '\n';
    }
}

}  // namespace kcheck
