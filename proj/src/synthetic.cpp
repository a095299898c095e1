#include "kcheck/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "kcheck/error.hpp"
#include "kcheck/rag.hpp"

namespace kcheck {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InputError("normal_quantile: p must lie in (0, 1)");
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        const double mid = 0.5 * (lo + hi);
        (normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double mu_for_bayes_accuracy(double accuracy, int dim) {
    if (dim <= 0) throw InputError("mu_for_bayes_accuracy: dim must be positive");
    if (!(accuracy > 0.5 && accuracy < 1.0)) throw InputError("mu_for_bayes_accuracy: accuracy must lie in (0.5, 1)");
    return normal_quantile(accuracy) / std::sqrt(static_cast<double>(dim));
}

std::vector<RepresentationRecord> gaussian_clusters(std::size_t n_pos, std::size_t n_neg, const ClusterSpec& spec,
                                                    SplitMix64& rng) {
    if (spec.dim <= 0) throw InputError("gaussian_clusters: dim must be positive");
    std::vector<RepresentationRecord> out;
    out.reserve(n_pos + n_neg);
    for (std::size_t i = 0; i < n_pos + n_neg; ++i) {
        RepresentationRecord r;
        r.id = spec.id_prefix + std::to_string(i);
        r.task = spec.task;
        r.label = i < n_pos ? 1 : 0;
        r.model = spec.model;
        r.layer = spec.layer;
        r.dim = spec.dim;
        const double mean = r.label ? spec.mu : -spec.mu;
        r.vec.resize(static_cast<std::size_t>(spec.dim));
        for (double& x : r.vec) x = mean + spec.sigma * rng.normal();
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<TokenScoreRecord> weak_token_scores(const std::vector<RepresentationRecord>& records, double auc,
                                                std::size_t n_tokens, SplitMix64& rng) {
    if (n_tokens == 0) throw InputError("weak_token_scores: n_tokens must be positive");
    const double delta = std::sqrt(2.0) * normal_quantile(auc);
    std::vector<TokenScoreRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        const double z = r.label * delta + rng.normal();
        // log(sigmoid(z)) = -softplus(-z)
        const double lp = -(std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z))));
        TokenScoreRecord t;
        t.id = r.id;
        for (std::size_t k = 0; k < n_tokens; ++k) {
            t.tokens.push_back("tok" + std::to_string(k));
            t.logprobs.push_back(std::min(lp, 0.0));
        }
        out.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------- RAG fixture

namespace {

const char* const kGold[] = {"Aldermoor",  "Brackenridge", "Cindervale", "Dunmere",   "Elmsworth",
                             "Fallowmere", "Glenhaven",    "Hollowstead", "Ironbrook", "Juniperfield",
                             "Kestrelmoor", "Larkspire",   "Marrowgate", "Northwold", "Oakhurst",
                             "Pinecrest",  "Quillbrook",   "Ravensholm", "Stonemarch", "Thornbury"};
const char* const kWrong[] = {"Ashcombe", "Birchwick", "Coldharbor", "Driftmoor", "Eastvale",
                              "Foxley",   "Greywater", "Hartwell",   "Islemere",  "Jarrowby",
                              "Kingsmead", "Lowfield", "Millbrook",  "Netherby",  "Orchardton",
                              "Pemberly", "Queensford", "Rookwood",  "Saltmarsh", "Tidewell"};
constexpr std::size_t kNames = std::size(kGold);

std::string cycled(const char* const* names, std::size_t i) {
    std::string s = names[i % kNames];
    if (i >= kNames) s += "-" + std::to_string(i / kNames);
    return s;
}

Vec random_unit(int dim, SplitMix64& rng) {
    Vec v(dim);
    for (int j = 0; j < dim; ++j) v(j) = rng.normal();
    return v / v.norm();
}

RepresentationRecord vector_record(std::string id, Task task, int label, const std::string& model, const Vec& v) {
    RepresentationRecord r;
    r.id = std::move(id);
    r.task = task;
    r.label = label;
    r.model = model;
    r.layer = 0;
    r.dim = static_cast<int>(v.size());
    r.vec = to_std(v);
    return r;
}

struct ScenarioClusters {
    std::array<Vec, 4> means;
    SplitMix64 rng;

    Vec draw(Task task, int label) {
        const Vec& m = means[static_cast<int>(task)];
        Vec v(m.size());
        for (Eigen::Index j = 0; j < m.size(); ++j) v(j) = (label ? m(j) : -m(j)) + rng.normal();
        return v;
    }
};

}  // namespace

RagFixture make_rag_fixture(const RagFixtureSpec& spec) {
    if (spec.n_queries == 0 || spec.embed_dim <= 0 || spec.rep_dim <= 0) {
        throw InputError("rag fixture: sizes must be positive");
    }
    SplitMix64 rng(spec.seed);
    RagFixture fx;
    std::map<std::string, PassageRecord> by_pid;

    for (std::size_t i = 0; i < spec.n_queries; ++i) {
        QueryRecord q;
        q.id = "q" + std::to_string(i);
        q.question = "Which registry name belongs to archive entry " + std::to_string(i) + "?";
        q.gold_answers = {cycled(kGold, i)};
        q.category = i % 2 == 1 ? QueryCategory::Noisy : QueryCategory::Clean;
        q.known_hint = (i / 2) % 2 == 0 ? 1 : 0;
        const bool noisy = q.category == QueryCategory::Noisy;
        const bool has_gold = i % 5 != 4;
        const bool misleading_first = i % 3 != 0;
        const std::string wrong = cycled(kWrong, i);
        if (*q.known_hint) fx.memory[q.question] = q.gold_answers.front();
        if (noisy) fx.wrong_answers[q.id] = wrong;

        const Vec qv = random_unit(spec.embed_dim, rng);
        fx.query_embeddings.push_back(vector_record(q.id, Task::T1Internal, 0, "encoder", qv));

        std::vector<std::pair<PassageRecord, double>> passages;
        auto add = [&](PassageKind kind, std::string text) {
            PassageRecord p;
            p.pid = q.id + "-p" + std::to_string(passages.size());
            p.text = std::move(text);
            p.kind = kind;
            passages.push_back({std::move(p), 0.0});
        };
        const std::string entry = "Archive entry " + std::to_string(i);
        if (has_gold) add(PassageKind::Helpful, entry + " is listed in the registry. The answer is " + q.gold_answers[0] + ".");
        add(PassageKind::Unhelpful, entry + " was filed under a general heading and moved twice.");
        add(PassageKind::Unhelpful, entry + " shares a shelf with several older catalogues.");
        if (noisy) {
            add(PassageKind::Misleading, "Several reports about " + entry + " agree. The answer is " + wrong + ".");
            add(PassageKind::Misleading, "According to a recent summary of " + entry + ", the answer is " + wrong + ".");
            for (const auto& [p, w] : passages) {
                if (p.kind == PassageKind::Misleading && !validate_misleading(p.text, wrong, q.gold_answers)) {
                    throw ModelError("rag fixture produced an invalid misleading passage: " + p.pid);
                }
            }
        }

        // Similarity weights fix the retrieval order per query.
        double unhelpful_w = noisy ? 0.8 : 0.9;
        double misleading_w = misleading_first ? 0.95 : 0.9;
        for (auto& [p, w] : passages) {
            switch (p.kind) {
                case PassageKind::Helpful: w = noisy && misleading_first ? 0.85 : 0.95; break;
                case PassageKind::Misleading: w = misleading_w; misleading_w -= 0.03; break;
                default: w = unhelpful_w; unhelpful_w -= 0.05; break;
            }
        }

        for (auto& [p, w] : passages) {
            Vec e = w * qv;
            for (int j = 0; j < spec.embed_dim; ++j) e(j) += 0.01 * rng.normal() / std::sqrt(double(spec.embed_dim));
            fx.passage_embeddings.push_back(vector_record(p.pid, Task::T1Internal, 0, "encoder", e));
            by_pid[p.pid] = p;
            fx.passages.push_back(std::move(p));
        }
        fx.queries.push_back(std::move(q));
    }

    ScenarioClusters clusters{{}, SplitMix64(rng.next())};
    const double mu = spec.rep_separation / std::sqrt(static_cast<double>(spec.rep_dim));
    for (auto& m : clusters.means) {
        m.resize(spec.rep_dim);
        for (int j = 0; j < spec.rep_dim; ++j) m(j) = rng.next() & 1 ? mu : -mu;
    }

    for (int t = 0; t < 4; ++t) {
        const Task task = static_cast<Task>(t);
        const std::string prefix = std::string(task_code(task)) + "-train-";
        for (std::size_t j = 0; j < 2 * spec.n_train_per_class; ++j) {
            const int label = j < spec.n_train_per_class ? 1 : 0;
            fx.train[t].push_back(
                vector_record(prefix + std::to_string(j), task, label, "synthetic", clusters.draw(task, label)));
        }
    }

    const RetrievalIndex index = build_index(fx.passage_embeddings);
    for (std::size_t i = 0; i < fx.queries.size(); ++i) {
        const QueryRecord& q = fx.queries[i];
        auto t1 = vector_record("rep-t1-" + q.id, Task::T1Internal, *q.known_hint, "synthetic",
                                clusters.draw(Task::T1Internal, *q.known_hint));
        t1.meta["query_id"] = q.id;
        fx.reps.push_back(std::move(t1));
        for (const auto& hit : index.retrieve(to_eigen(fx.query_embeddings[i].vec), spec.k_retrieve)) {
            const PassageKind kind = context_kind(q, by_pid.at(hit.pid));
            for (Task task : {Task::T2InformedHelp, Task::T3UninformedHelp, Task::T4Contradiction}) {
                const int label = task == Task::T4Contradiction ? (kind != PassageKind::Misleading)
                                                                : (kind == PassageKind::Helpful);
                auto r = vector_record("rep-" + std::string(task_code(task)) + "-" + q.id + "-" + hit.pid, task, label,
                                       "synthetic", clusters.draw(task, label));
                r.meta["query_id"] = q.id;
                r.meta["pid"] = hit.pid;
                fx.reps.push_back(std::move(r));
            }
        }
    }
    return fx;
}

std::vector<std::string> write_rag_fixture(const RagFixture& fx, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InputError("cannot create directory '" + dir + "': " + ec.message());
    std::vector<std::string> paths;
    auto path = [&](const std::string& name) {
        paths.push_back((fs::path(dir) / name).string());
        return paths.back();
    };
    save_records(fx.queries, path("queries.jsonl"));
    save_records(fx.passages, path("passages.jsonl"));
    save_records(fx.query_embeddings, path("query_emb.rvf"));
    save_records(fx.passage_embeddings, path("passage_emb.rvf"));
    save_records(fx.reps, path("reps.rvf"));
    for (int t = 0; t < 4; ++t) save_records(fx.train[t], path("train_" + std::string(task_code(static_cast<Task>(t))) + ".rvf"));

    auto write_lines = [&](const std::string& p, const std::vector<nlohmann::ordered_json>& rows) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw InputError("cannot write '" + p + "'");
        for (const auto& row : rows) out << row.dump() << '\n';
    };
    std::vector<nlohmann::ordered_json> memory;
    for (const auto& [question, answer] : fx.memory) memory.push_back({{"question", question}, {"answer", answer}});
    write_lines(path("memory.jsonl"), memory);

    std::vector<nlohmann::ordered_json> mislead;
    for (const auto& p : fx.passages) {
        if (p.kind != PassageKind::Misleading) continue;
        const std::string qid = p.pid.substr(0, p.pid.find('-'));
        const auto q = std::find_if(fx.queries.begin(), fx.queries.end(), [&](const auto& x) { return x.id == qid; });
        mislead.push_back({{"id", p.pid},
                           {"text", p.text},
                           {"wrong_answer", fx.wrong_answers.at(qid)},
                           {"true_answers", q->gold_answers}});
    }
    write_lines(path("mislead.jsonl"), mislead);
    return paths;
}

}  // namespace kcheck
