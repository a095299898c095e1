// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>

#include <Eigen/Eigenvalues>

#include "cli_support.hpp"
#include "kcheck/baselines.hpp"
#include "kcheck/checker.hpp"
#include "kcheck/metrics.hpp"
#include "kcheck/rag.hpp"
#include "kcheck/synthetic.hpp"
#include "support.hpp"

using namespace kcheck;
using namespace kcheck::testing;
namespace fs = std::filesystem;

namespace {

constexpr double kMinSeparableAcc = 0.95;
constexpr double kMaxRuntimeS = 60.0;
constexpr double kWeakAuc = 0.65;
constexpr double kMinOrderingGap = 0.15;
constexpr double kGradRelTol = 1e-4;
constexpr double kPcaMatchTol = 1e-8;
constexpr double kOrthoTol = 1e-10;
constexpr double kAucTol = 1e-12;
constexpr double kPerplexityTol = 1e-9;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double accuracy(const AnyChecker& checker, const std::vector<Vec>& pos, const std::vector<Vec>& neg) {
    std::size_t right = 0;
    for (const auto& v : pos) right += classify(checker, v).label == 1;
    for (const auto& v : neg) right += classify(checker, v).label == 0;
    return static_cast<double>(right) / static_cast<double>(pos.size() + neg.size());
}

struct Benchmark {
    std::vector<Vec> train_pos, train_neg, eval_pos, eval_neg;
    std::vector<RepresentationRecord> eval_records;
};

Benchmark separable_benchmark(std::uint64_t seed) {
    SplitMix64 rng(seed);
    ClusterSpec spec;
    spec.dim = 64;
    spec.mu = mu_for_bayes_accuracy(0.99, 64);
    auto train = gaussian_clusters(100, 100, spec, rng);
    spec.id_prefix = "e";
    auto eval = gaussian_clusters(500, 500, spec, rng);
    Benchmark b;
    for (const auto& r : train) (r.label ? b.train_pos : b.train_neg).push_back(to_eigen(r.vec));
    for (const auto& r : eval) (r.label ? b.eval_pos : b.eval_neg).push_back(to_eigen(r.vec));
    b.eval_records = eval;
    return b;
}

Outcome criterion_separability() {
    const auto start = std::chrono::steady_clock::now();
    auto b = separable_benchmark(101);
    const double pca = accuracy(train_pca_checker(b.train_pos, b.train_neg, PcaCheckerConfig{}), b.eval_pos, b.eval_neg);
    TrainConfig cfg;
    cfg.seed = 101;
    const double con = accuracy(train_contrastive(b.train_pos, b.train_neg, cfg).checker, b.eval_pos, b.eval_neg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {pca >= kMinSeparableAcc && con >= kMinSeparableAcc && secs < kMaxRuntimeS,
            "rep-pca acc=" + fmt(pca) + " rep-con acc=" + fmt(con) + " (min " + fmt(kMinSeparableAcc) + "), " +
                fmt(secs) + "s (max " + fmt(kMaxRuntimeS) + "s)"};
}

Outcome criterion_ordering() {
    auto b = separable_benchmark(202);
    TrainConfig cfg;
    cfg.seed = 202;
    const double con = accuracy(train_contrastive(b.train_pos, b.train_neg, cfg).checker, b.eval_pos, b.eval_neg);
    SplitMix64 rng(203);
    const auto scores = weak_token_scores(b.eval_records, kWeakAuc, 5, rng);
    std::vector<int> labels;
    for (const auto& r : b.eval_records) labels.push_back(r.label);
    double best = 0.0;
    std::string best_name;
    for (auto kind : {IndicatorKind::Perplexity, IndicatorKind::Lowest, IndicatorKind::Average}) {
        std::vector<double> s;
        for (const auto& rec : scores) s.push_back(indicator_score(rec, kind));
        const double acc = sweep_best_accuracy(s, labels, make_indicator(kind)).best_acc;
        if (acc > best) {
            best = acc;
            best_name = std::string(indicator_name(kind));
        }
    }
    return {con - best >= kMinOrderingGap, "rep-con acc=" + fmt(con) + " best probability sweep (" + best_name +
                                               ")=" + fmt(best) + " gap=" + fmt(con - best) + " (min " +
                                               fmt(kMinOrderingGap) + ")"};
}

double gradient_relative_error(FeedForwardNet net, const Vec& a, const Vec& p, const Vec& n, double margin,
                               HalfScope scope) {
    const auto analytic = contrastive_loss_grad(net, a, p, n, margin, scope);
    const double h = 1e-6;
    double diff2 = 0.0, norm_g = 0.0, norm_fd = 0.0;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto visit = [&](double& param, double g) {
            const double saved = param;
            param = saved + h;
            const double up = contrastive_loss(net, a, p, n, margin, scope);
            param = saved - h;
            const double down = contrastive_loss(net, a, p, n, margin, scope);
            param = saved;
            const double fd = (up - down) / (2 * h);
            diff2 += (g - fd) * (g - fd);
            norm_g += g * g;
            norm_fd += fd * fd;
        };
        auto& layer = net.layers[l];
        for (int i = 0; i < layer.weight.rows(); ++i) {
            for (int j = 0; j < layer.weight.cols(); ++j) visit(layer.weight(i, j), analytic.grad.layers[l].weight(i, j));
        }
        for (int i = 0; i < layer.bias.size(); ++i) visit(layer.bias(i), analytic.grad.layers[l].bias(i));
    }
    return std::sqrt(diff2) / std::max(std::sqrt(norm_g) + std::sqrt(norm_fd), 1e-12);
}

Outcome criterion_gradients() {
    SplitMix64 rng(303);
    double worst = 0.0;
    int done = 0, redrawn = 0;
    while (done < 100) {
        const int in = 2 + static_cast<int>(rng.uniform_index(7));
        const int hidden = 2 + static_cast<int>(rng.uniform_index(8));
        const int out = 2 + static_cast<int>(rng.uniform_index(5));
        auto net = make_network({in, hidden, out}, done % 2 == 0, rng.next());
        for (auto& l : net.layers) l.bias = random_vec(static_cast<int>(l.bias.size()), rng, 0.1);
        const Vec a = random_vec(in, rng), p = random_vec(in, rng), n = random_vec(in, rng);
        const double margin = rng.uniform(0.05, 4.0);
        // The hinge is not differentiable at its kink; finite differences
        // straddling it are meaningless, so such draws are replaced.
        if (std::abs(margin - (forward(net, a) - forward(net, n)).squaredNorm()) < 1e-3) {
            ++redrawn;
            continue;
        }
        const auto scope = done % 4 < 2 ? HalfScope::FirstTerm : HalfScope::WholeSum;
        worst = std::max(worst, gradient_relative_error(net, a, p, n, margin, scope));
        ++done;
    }
    return {worst <= kGradRelTol, "100 configurations, worst relative error=" + fmt(worst) + " (max " +
                                      fmt(kGradRelTol) + "), " + std::to_string(redrawn) + " kink draws replaced"};
}

Outcome criterion_pca() {
    SplitMix64 rng(404);
    double worst_match = 0.0, worst_ortho = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 20 + static_cast<int>(rng.uniform_index(60));
        const int d = 3 + static_cast<int>(rng.uniform_index(10));
        Mat rows = random_mat(n, d, rng);
        for (int j = 0; j < d; ++j) rows.col(j) *= 1.0 + 0.5 * j;
        const int k = 1 + static_cast<int>(rng.uniform_index(std::min(d, 3)));
        const auto model = pca_fit(rows, k);
        const Mat centered = rows.rowwise() - rows.colwise().mean();
        Eigen::SelfAdjointEigenSolver<Mat> eig(centered.transpose() * centered);
        for (int c = 0; c < k; ++c) {
            const Vec oracle = eig.eigenvectors().col(d - 1 - c);
            const Vec got = model.components.row(c).transpose();
            worst_match = std::max(worst_match, std::min((got - oracle).cwiseAbs().maxCoeff(),
                                                         (got + oracle).cwiseAbs().maxCoeff()));
        }
        const Mat gram = model.components * model.components.transpose();
        worst_ortho = std::max(worst_ortho, (gram - Mat::Identity(k, k)).cwiseAbs().maxCoeff());
    }
    return {worst_match <= kPcaMatchTol && worst_ortho <= kOrthoTol,
            "50 matrices, max component deviation=" + fmt(worst_match) + " (max " + fmt(kPcaMatchTol) +
                "), orthonormality error=" + fmt(worst_ortho) + " (max " + fmt(kOrthoTol) + ")"};
}

Outcome criterion_auc() {
    SplitMix64 rng(505);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(300);
        const int levels = trial % 2 == 0 ? 1 + static_cast<int>(rng.uniform_index(4)) : 0;
        std::vector<double> s;
        std::vector<int> l;
        for (std::size_t i = 0; i < n; ++i) {
            const int label = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.uniform_index(2));
            l.push_back(label);
            s.push_back(levels ? static_cast<double>(rng.uniform_index(levels)) + 0.5 * label * rng.uniform_index(2)
                               : rng.normal() + 0.7 * label);
        }
        worst = std::max(worst, std::abs(auc(roc_curve(s, l)) - concordance_auc(s, l)));
        worst = std::max(worst, std::abs(auc(roc_curve(s, l, ScoreDirection::LowerIsPositive)) -
                                         (1.0 - concordance_auc(s, l))));
    }
    return {worst <= kAucTol, "200 score sets (half heavily tied), max |auc - concordance|=" + fmt(worst) +
                                  " (max " + fmt(kAucTol) + ")"};
}

Outcome criterion_formulas() {
    const TokenScoreRecord rec{"x", {"a", "b"}, {std::log(0.5), std::log(0.5)}};
    const double ppl = perplexity(rec);
    const auto m = binary_metrics(Confusion{2, 1, 1, 2});
    const bool exact = m.precision == 2.0 / 3.0 && m.recall == 2.0 / 3.0 && m.f1 == 2.0 / 3.0;
    return {std::abs(ppl - 2.0) <= kPerplexityTol && exact,
            "perplexity=" + fmt(ppl) + ", precision/recall/f1 exactly 2/3: " + (exact ? "yes" : "no")};
}

Outcome criterion_retrieval() {
    SplitMix64 rng(707);
    RetrievalIndex index;
    std::vector<Vec> embs;
    std::vector<std::string> pids;
    for (int i = 0; i < 10000; ++i) {
        embs.push_back(random_vec(128, rng));
        pids.push_back("p" + std::to_string(i));
        index.add(pids.back(), embs.back());
    }
    std::size_t mismatches = 0, compared = 0;
    for (int trial = 0; trial < 3; ++trial) {
        const Vec q = random_vec(128, rng);
        std::vector<std::pair<double, std::string>> oracle;
        for (std::size_t i = 0; i < embs.size(); ++i) oracle.emplace_back(-q.dot(embs[i]), pids[i]);
        std::sort(oracle.begin(), oracle.end());
        for (std::size_t k : {1ul, 10ul, 10000ul}) {
            const auto got = index.retrieve(q, k);
            if (got.size() != k) ++mismatches;
            for (std::size_t i = 0; i < std::min(k, got.size()); ++i) {
                ++compared;
                if (got[i].pid != oracle[i].second || got[i].score != -oracle[i].first) ++mismatches;
            }
        }
    }
    return {mismatches == 0, "10000 x 128-dim index, k in {1,10,10000}, 3 queries: " + std::to_string(compared) +
                                 " ranks compared, " + std::to_string(mismatches) + " mismatches"};
}

Outcome criterion_pipeline() {
    RagFixtureSpec spec;
    spec.n_queries = 20;
    spec.seed = 808;
    const auto fx = make_rag_fixture(spec);
    std::map<std::string, QueryRecord> by_id;
    for (const auto& q : fx.queries) by_id[q.id] = q;
    std::size_t injected = 0, invalid = 0;
    for (const auto& p : fx.passages) {
        if (p.kind != PassageKind::Misleading) continue;
        ++injected;
        const auto& q = by_id.at(p.pid.substr(0, p.pid.find('-')));
        invalid += !validate_misleading(p.text, fx.wrong_answers.at(q.id), q.gold_answers);
    }
    std::map<std::string, PassageRecord> passages;
    for (const auto& p : fx.passages) passages[p.pid] = p;
    const auto index = build_index(fx.passage_embeddings);
    std::map<std::string, Vec> q_emb;
    for (const auto& r : fx.query_embeddings) q_emb[r.id] = to_eigen(r.vec);
    const RunInputs in{&fx.queries, &passages, &index, &q_emb};
    EchoClient echo(fx.memory);
    OracleCheckers oracle;
    RunConfig cfg;
    cfg.filtering = FilterMode::Off;
    const auto off = evaluate_run(in, nullptr, echo, cfg);
    cfg.filtering = FilterMode::Oracle;
    const auto on = evaluate_run(in, &oracle, echo, cfg);
    const bool pass = injected > 0 && invalid == 0 && on.distribution_after.misleading == 0 &&
                      on.noisy_acc > off.noisy_acc;
    return {pass, std::to_string(injected) + " injected passages (" + std::to_string(invalid) +
                      " invalid), misleading contexts " + std::to_string(on.distribution_before.misleading) + " -> " +
                      std::to_string(on.distribution_after.misleading) + ", noisy acc " + fmt(off.noisy_acc) +
                      " -> " + fmt(on.noisy_acc)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
    return files;
}

Outcome criterion_determinism() {
    pin_source_date();
    const auto dir = temp_dir("acceptance-determinism");
    auto p = [&](const std::string& name) { return (dir / name).string(); };
    const auto style = prompt_style(Task::T1Internal, PromptKind::Direct);
    const std::vector<std::vector<std::string>> commands{
        {"--seed", "11", "synth", "clusters", "--out", p("c"), "--n-pos", "150", "--n-neg", "150"},
        {"--seed", "12", "synth", "clusters", "--out", p("layers"), "--dim", "16", "--n-pos", "120", "--n-neg", "120",
         "--bayes-acc", "0.5", "0.99"},
        {"--seed", "13", "synth", "rag-fixture", "--out", p("fx")},
        {"--seed", "14", "train", "--kind", "pca", "--task", "t1", "--train", p("c/reps.rvf"), "--n-train", "100",
         "--eval-out", p("eval.rvf"), "--out", p("pca.json")},
        {"--seed", "15", "train", "--kind", "contrastive", "--task", "t1", "--train", p("c/reps.rvf"), "--n-train",
         "100", "--epochs", "20", "--out", p("con.json"), "--loss-out", p("loss.csv")},
        {"eval", "--checker", p("pca.json"), "--eval", p("eval.rvf"), "--out", p("pca.csv"), "--roc", p("pca_roc.csv"),
         "--points", p("proj.csv")},
        {"eval", "--checker", p("con.json"), "--eval", p("eval.rvf"), "--out", p("con.csv"), "--points",
         p("scores.csv")},
        {"eval", "--baseline", "average", "--tsf", p("c/scores.tsf"), "--eval", p("c/reps.rvf"), "--out",
         p("avg.csv")},
        {"eval", "--answer", "direct", "--items", p("items.jsonl"), "--client", "replay:" + p("replay.jsonl"),
         "--out", p("answer.csv"), "--points", p("answers.csv")},
        {"--seed", "16", "layer-sweep", "--kind", "pca", "--task", "t1", "--inputs", p("layers/layer0.rvf"),
         p("layers/layer1.rvf"), "--out", p("sweep.csv")},
        {"filter-run", "--queries", p("fx/queries.jsonl"), "--passages", p("fx/passages.jsonl"), "--passage-emb",
         p("fx/passage_emb.rvf"), "--query-emb", p("fx/query_emb.rvf"), "--client", "echo:" + p("fx/memory.jsonl"),
         "--filtering", "oracle", "--out", p("run")},
        {"validate-mislead", "--input", p("fx/mislead.jsonl"), "--out", p("mislead.csv")},
        {"report", "--inputs", p("pca.csv"), p("con.csv"), p("avg.csv"), p("run/report.json"), "--out",
         p("merged.csv"), "--runs-out", p("runs.csv"), "--markdown", p("summary.md")},
    };
    spit(dir / "items.jsonl", R"({"id":"a","task":"t1","question":"Q1?","label":1})"
                              "\n");
    spit(dir / "replay.jsonl",
         nlohmann::json{{"prompt", render_prompt(style, "Q1?", std::nullopt)}, {"text", "Yes."}}.dump() + "\n");

    auto run_all = [&]() -> std::string {
        for (const auto& args : commands) {
            const auto r = run(args);
            if (r.code != kExitOk) return args[args[0] == "--seed" ? 2 : 0] + " exited " + std::to_string(r.code) + ": " + r.err;
        }
        return "";
    };
    if (auto e = run_all(); !e.empty()) return {false, e};
    const auto first = snapshot(dir);
    if (auto e = run_all(); !e.empty()) return {false, e};
    const auto second = snapshot(dir);
    std::vector<std::string> differing;
    for (const auto& [name, bytes] : first) {
        auto it = second.find(name);
        if (it == second.end() || it->second != bytes) differing.push_back(name);
    }
    fs::remove_all(dir);
    std::string detail = std::to_string(commands.size()) + " commands rerun, " + std::to_string(first.size()) +
                         " artifacts compared, " + std::to_string(differing.size()) + " differ";
    for (const auto& d : differing) detail += " " + d;
    return {differing.empty() && first.size() == second.size(), detail};
}

Outcome criterion_round_trips() {
    SplitMix64 rng(1010);
    const auto dir = temp_dir("acceptance-roundtrip");
    ClusterSpec spec;
    spec.dim = 24;
    spec.mu = 0.3;
    auto recs = gaussian_clusters(250, 250, spec, rng);
    for (std::size_t i = 0; i < recs.size(); i += 7) recs[i].meta["source"] = "probe " + std::to_string(i);
    const auto scores = weak_token_scores(recs, 0.7, 4, rng);
    save_records(recs, (dir / "r.rvf").string());
    save_records(scores, (dir / "s.tsf").string());
    const bool rvf_ok = load_representations((dir / "r.rvf").string()) == recs;
    const bool tsf_ok = load_token_scores((dir / "s.tsf").string()) == scores;

    std::vector<Vec> pos, neg, probes;
    for (const auto& r : recs) {
        (r.label ? pos : neg).push_back(to_eigen(r.vec));
        probes.push_back(to_eigen(r.vec));
    }
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.hidden = 32;
    cfg.out_dim = 16;
    std::size_t changed = 0;
    const std::vector<AnyChecker> checkers{train_pca_checker(pos, neg, PcaCheckerConfig{}),
                                           train_contrastive(pos, neg, cfg).checker};
    for (const auto& checker : checkers) {
        const auto path = (dir / "chk.json").string();
        save_checker(checker, path);
        const auto back = load_checker(path);
        for (const auto& v : probes) {
            const auto a = classify(checker, v), b = classify(back, v);
            changed += a.label != b.label || a.score != b.score;
        }
    }
    fs::remove_all(dir);
    return {rvf_ok && tsf_ok && changed == 0,
            "500 RVF records " + std::string(rvf_ok ? "equal" : "DIFFER") + ", 500 TSF records " +
                (tsf_ok ? "equal" : "DIFFER") + ", pca+contrastive decisions changed on 500 probes: " +
                std::to_string(changed)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"synthetic separability", criterion_separability},
        {"ordering vs probability baselines", criterion_ordering},
        {"gradient correctness", criterion_gradients},
        {"pca correctness", criterion_pca},
        {"auc identity", criterion_auc},
        {"formula spot checks", criterion_formulas},
        {"retrieval exactness", criterion_retrieval},
        {"pipeline fixture", criterion_pipeline},
        {"determinism", criterion_determinism},
        {"round-trips", criterion_round_trips},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("criterion %zu [%s]: %s - %s\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
