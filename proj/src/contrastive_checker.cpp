#include "kcheck/contrastive_checker.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <numeric>

#include "kcheck/error.hpp"
#include "kcheck/json_util.hpp"
#include "kcheck/rng.hpp"

namespace kcheck {

std::string_view optimizer_name(Optimizer opt) { return opt == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer parse_optimizer(std::string_view name) {
    if (name == "adam") return Optimizer::Adam;
    if (name == "sgd") return Optimizer::Sgd;
    throw InputError("unknown optimizer '" + std::string(name) + "' (expected adam|sgd)");
}

void TrainConfig::validate() const {
    if (!(margin > 0.0) || !std::isfinite(margin)) throw InputError("margin must be positive");
    if (epochs <= 0) throw InputError("epochs must be positive");
    if (batch <= 0) throw InputError("batch must be positive");
    if (!(step > 0.0)) throw InputError("step must be positive");
    if (hidden <= 0 || out_dim <= 0) throw InputError("layer sizes must be positive");
    if (!(holdout_frac > 0.0 && holdout_frac < 1.0)) throw InputError("holdout_frac must lie in (0, 1)");
}

namespace {

struct Triplet {
    std::size_t anchor, positive, negative;
};

Triplet sample_triplet(std::size_t anchor, std::size_t n_pos, std::size_t n_neg, SplitMix64& rng) {
    std::size_t k = rng.uniform_index(n_pos - 1);
    if (k >= anchor) ++k;
    return {anchor, k, rng.uniform_index(n_neg)};
}

std::size_t holdout_count(std::size_t n, double frac, std::size_t min_train) {
    auto h = static_cast<std::size_t>(std::floor(frac * static_cast<double>(n)));
    h = std::max<std::size_t>(h, 1);
    return std::min(h, n - min_train);
}

}  // namespace

ContrastiveTrainResult train_contrastive(const std::vector<Vec>& pos, const std::vector<Vec>& neg,
                                         const TrainConfig& config, Task task) {
    config.validate();
    if (pos.size() < 2) throw InputError("contrastive checker: need at least 2 positive samples");
    if (neg.empty()) throw InputError("contrastive checker: need at least 1 negative sample");
    const auto d = pos.front().size();
    for (const auto& v : pos) {
        if (v.size() != d) throw InputError("contrastive checker: dimension mismatch");
    }
    for (const auto& v : neg) {
        if (v.size() != d) throw InputError("contrastive checker: dimension mismatch");
    }

    SplitMix64 rng(config.seed);
    std::vector<std::size_t> pi(pos.size()), ni(neg.size());
    std::iota(pi.begin(), pi.end(), 0);
    std::iota(ni.begin(), ni.end(), 0);
    rng.shuffle(pi);
    rng.shuffle(ni);

    const bool split = pos.size() >= 3 && neg.size() >= 2;
    const std::size_t hold_pos = split ? holdout_count(pos.size(), config.holdout_frac, 2) : 0;
    const std::size_t hold_neg = split ? holdout_count(neg.size(), config.holdout_frac, 1) : 0;
    std::vector<Vec> train_pos, train_neg, cal_pos, cal_neg;
    for (std::size_t i = 0; i < pi.size(); ++i) (i < hold_pos ? cal_pos : train_pos).push_back(pos[pi[i]]);
    for (std::size_t i = 0; i < ni.size(); ++i) (i < hold_neg ? cal_neg : train_neg).push_back(neg[ni[i]]);
    if (!split) {
        cal_pos = train_pos;
        cal_neg = train_neg;
    }

    ContrastiveTrainResult result;
    ContrastiveChecker& checker = result.checker;
    checker.task = task;
    checker.net = make_network({static_cast<int>(d), config.hidden, config.out_dim}, config.normalize_output, rng.next());

    std::vector<Triplet> probe;
    for (std::size_t i = 0; i < train_pos.size(); ++i) {
        probe.push_back(sample_triplet(i, train_pos.size(), train_neg.size(), rng));
    }
    auto probe_loss = [&] {
        double total = 0.0;
        for (const auto& t : probe) {
            total += contrastive_loss(checker.net, train_pos[t.anchor], train_pos[t.positive], train_neg[t.negative],
                                      config.margin, config.half_scope);
        }
        return total / static_cast<double>(probe.size());
    };
    result.probe_loss_initial = probe_loss();

    std::vector<std::size_t> order(train_pos.size());
    std::iota(order.begin(), order.end(), 0);
    AdamState adam = AdamState::for_net(checker.net);
    const auto batch = static_cast<std::size_t>(config.batch);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            NetGradient grad = NetGradient::zeros_like(checker.net);
            for (std::size_t b = start; b < end; ++b) {
                const Triplet t = sample_triplet(order[b], train_pos.size(), train_neg.size(), rng);
                ContrastiveLoss lg;
                try {
                    lg = contrastive_loss_grad(checker.net, train_pos[t.anchor], train_pos[t.positive],
                                               train_neg[t.negative], config.margin, config.half_scope);
                } catch (const ModelError& e) {
                    throw ModelError("contrastive training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
                }
                epoch_total += lg.loss;
                grad += lg.grad;
            }
            grad *= 1.0 / static_cast<double>(end - start);
            if (config.optimizer == Optimizer::Adam) {
                adam_step(checker.net, grad, config.step, adam);
            } else {
                apply_gradient(checker.net, grad, config.step);
            }
        }
        const double mean_loss = epoch_total / static_cast<double>(order.size());
        if (!std::isfinite(mean_loss)) {
            throw ModelError("contrastive training diverged at epoch " + std::to_string(epoch) + ": non-finite loss");
        }
        result.epoch_loss.push_back(mean_loss);
    }
    result.probe_loss_final = probe_loss();

    for (const auto& v : train_pos) checker.pos_refs.push_back(forward(checker.net, v));
    std::vector<double> sp, sn;
    for (const auto& v : cal_pos) sp.push_back(contrastive_score(checker, v));
    for (const auto& v : cal_neg) sn.push_back(contrastive_score(checker, v));
    checker.threshold = calibrate_threshold(sp, sn);

    auto& meta = checker.train_meta;
    meta.seed = config.seed;
    meta.margin = config.margin;
    meta.epochs = config.epochs;
    meta.step = config.step;
    meta.optimizer = config.optimizer;
    meta.h = config.out_dim;
    meta.batch = config.batch;
    meta.holdout_frac = config.holdout_frac;
    meta.n_train_pos = train_pos.size();
    meta.n_train_neg = train_neg.size();
    meta.n_holdout_pos = split ? cal_pos.size() : 0;
    meta.n_holdout_neg = split ? cal_neg.size() : 0;
    return result;
}

ContrastiveTrainResult train_contrastive(const std::vector<RepresentationRecord>& records, const TrainConfig& config) {
    if (records.empty()) throw InputError("contrastive checker: no training records");
    std::vector<Vec> pos, neg;
    for (const auto& r : records) {
        if (r.task != records.front().task || r.model != records.front().model || r.layer != records.front().layer) {
            throw InputError("contrastive checker: training records mix tasks, models or layers");
        }
        (r.label == 1 ? pos : neg).push_back(to_eigen(r.vec));
    }
    ContrastiveTrainResult result = train_contrastive(pos, neg, config, records.front().task);
    result.checker.train_meta.model = records.front().model;
    result.checker.train_meta.layer = records.front().layer;
    return result;
}

double contrastive_score(const ContrastiveChecker& checker, const Vec& v) {
    if (v.size() != checker.dim()) {
        throw InputError("contrastive checker expects dimension " + std::to_string(checker.dim()) + ", got " +
                         std::to_string(v.size()));
    }
    if (checker.pos_refs.empty()) throw InputError("contrastive checker has no reference embeddings");
    const Vec e = forward(checker.net, v);
    if (e.norm() == 0.0) throw ModelError("test embedding is the zero vector");
    double total = 0.0;
    for (const auto& ref : checker.pos_refs) total += cosine_sim(e, ref);
    return total / static_cast<double>(checker.pos_refs.size());
}

double calibrate_threshold(const std::vector<double>& scores_pos, const std::vector<double>& scores_neg) {
    if (scores_pos.empty() || scores_neg.empty()) throw InputError("calibrate_threshold: both score lists must be nonempty");
    std::vector<double> all(scores_pos);
    all.insert(all.end(), scores_neg.begin(), scores_neg.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    std::vector<double> candidates{all.front() - 1.0};
    for (std::size_t i = 0; i + 1 < all.size(); ++i) candidates.push_back(0.5 * (all[i] + all[i + 1]));
    candidates.push_back(all.back() + 1.0);

    std::vector<double> sp(scores_pos), sn(scores_neg);
    std::sort(sp.begin(), sp.end());
    std::sort(sn.begin(), sn.end());
    // Balanced accuracy scaled by 2 |pos| |neg|, kept integral so ties compare exactly.
    const auto n_pos = static_cast<std::uint64_t>(sp.size());
    const auto n_neg = static_cast<std::uint64_t>(sn.size());
    double best_t = candidates.front();
    std::uint64_t best = 0;
    bool first = true;
    for (double t : candidates) {
        const auto above_pos = static_cast<std::uint64_t>(sp.end() - std::upper_bound(sp.begin(), sp.end(), t));
        const auto at_or_below_neg = static_cast<std::uint64_t>(std::upper_bound(sn.begin(), sn.end(), t) - sn.begin());
        const std::uint64_t bal = above_pos * n_neg + at_or_below_neg * n_pos;
        if (first || bal > best) {
            best = bal;
            best_t = t;
            first = false;
        }
    }
    return best_t;
}

Decision contrastive_classify(const ContrastiveChecker& checker, const Vec& v) {
    const double s = contrastive_score(checker, v);
    return {s > checker.threshold ? 1 : 0, s};
}

std::vector<ScoreRow> export_scores(const ContrastiveChecker& checker,
                                    const std::vector<RepresentationRecord>& records) {
    std::vector<ScoreRow> rows;
    rows.reserve(records.size());
    for (const auto& r : records) rows.push_back({r.id, contrastive_score(checker, to_eigen(r.vec)), r.label});
    return rows;
}

nlohmann::ordered_json to_json(const ContrastiveChecker& checker) {
    ojson doc;
    doc["kind"] = "contrastive";
    doc["task"] = std::string(task_code(checker.task));
    doc["layer_sizes"] = checker.net.layer_sizes();
    ojson weights = ojson::array(), biases = ojson::array();
    for (const auto& l : checker.net.layers) {
        weights.push_back(mat_to_json(l.weight));
        biases.push_back(vec_to_json(l.bias));
    }
    doc["weights"] = std::move(weights);
    doc["biases"] = std::move(biases);
    doc["normalize"] = checker.net.normalize_output;
    ojson refs = ojson::array();
    for (const auto& r : checker.pos_refs) refs.push_back(vec_to_json(r));
    doc["pos_refs"] = std::move(refs);
    doc["threshold"] = checker.threshold;
    const auto& m = checker.train_meta;
    doc["train_meta"] = {{"seed", m.seed},
                         {"m", m.margin},
                         {"epochs", m.epochs},
                         {"step", m.step},
                         {"optimizer", optimizer_name(m.optimizer)},
                         {"h", m.h},
                         {"batch", m.batch},
                         {"holdout_frac", m.holdout_frac},
                         {"n_train_pos", m.n_train_pos},
                         {"n_train_neg", m.n_train_neg},
                         {"n_holdout_pos", m.n_holdout_pos},
                         {"n_holdout_neg", m.n_holdout_neg},
                         {"model", m.model},
                         {"layer", m.layer}};
    return doc;
}

ContrastiveChecker contrastive_checker_from_json(const nlohmann::ordered_json& doc) {
    try {
        if (doc.at("kind").get<std::string>() != "contrastive") throw InputError("checker kind is not 'contrastive'");
        ContrastiveChecker c;
        c.task = parse_task(doc.at("task").get<std::string>());
        const auto& weights = doc.at("weights");
        const auto& biases = doc.at("biases");
        if (!weights.is_array() || !biases.is_array() || weights.size() != biases.size()) {
            throw InputError("weights and biases must be arrays of equal length");
        }
        for (std::size_t i = 0; i < weights.size(); ++i) {
            c.net.layers.push_back({mat_from_json(weights[i]), vec_from_json(biases[i])});
        }
        c.net.normalize_output = doc.at("normalize").get<bool>();
        c.net.validate();
        const auto sizes = doc.at("layer_sizes").get<std::vector<int>>();
        if (sizes != c.net.layer_sizes()) throw InputError("layer_sizes do not match the stored weights");
        for (const auto& r : doc.at("pos_refs")) {
            Vec ref = vec_from_json(r);
            if (ref.size() != c.net.output_dim()) throw InputError("reference embedding has the wrong length");
            c.pos_refs.push_back(std::move(ref));
        }
        if (c.pos_refs.empty()) throw InputError("pos_refs must be nonempty");
        c.threshold = doc.at("threshold").get<double>();
        const auto& m = doc.at("train_meta");
        c.train_meta.seed = m.at("seed").get<std::uint64_t>();
        c.train_meta.margin = m.at("m").get<double>();
        c.train_meta.epochs = m.at("epochs").get<int>();
        c.train_meta.step = m.at("step").get<double>();
        c.train_meta.optimizer = parse_optimizer(m.value("optimizer", std::string("adam")));
        c.train_meta.h = m.at("h").get<int>();
        c.train_meta.batch = m.value("batch", 0);
        c.train_meta.holdout_frac = m.value("holdout_frac", 0.0);
        c.train_meta.n_train_pos = m.value("n_train_pos", std::size_t{0});
        c.train_meta.n_train_neg = m.value("n_train_neg", std::size_t{0});
        c.train_meta.n_holdout_pos = m.value("n_holdout_pos", std::size_t{0});
        c.train_meta.n_holdout_neg = m.value("n_holdout_neg", std::size_t{0});
        c.train_meta.model = m.value("model", std::string());
        c.train_meta.layer = m.value("layer", 0);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed contrastive checker: ") + e.what());
    }
}

}  // namespace kcheck
