#include "kcheck/pca_checker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kcheck/error.hpp"
#include "kcheck/json_util.hpp"
#include "kcheck/rng.hpp"

namespace kcheck {

DifferenceSet build_difference_vectors(const std::vector<Vec>& pos, const std::vector<Vec>& neg, std::uint64_t seed) {
    if (pos.empty()) throw InputError("difference vectors: positive class is empty");
    if (neg.empty()) throw InputError("difference vectors: negative class is empty");
    const auto d = pos.front().size();
    for (const auto& v : pos) {
        if (v.size() != d) throw InputError("difference vectors: dimension mismatch among positives");
    }
    for (const auto& v : neg) {
        if (v.size() != d) throw InputError("difference vectors: dimension mismatch between classes");
    }

    std::vector<std::size_t> pi(pos.size()), ni(neg.size());
    std::iota(pi.begin(), pi.end(), 0);
    std::iota(ni.begin(), ni.end(), 0);
    SplitMix64(seed).shuffle(pi);
    SplitMix64(seed).shuffle(ni);

    DifferenceSet out;
    const std::size_t n = std::min(pos.size(), neg.size());
    out.diffs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double sign = (i % 2 == 0) ? 1.0 : -1.0;
        out.diffs.push_back(sign * (pos[pi[i]] - neg[ni[i]]));
    }
    return out;
}

PcaChecker train_pca_checker(const std::vector<Vec>& pos, const std::vector<Vec>& neg, const PcaCheckerConfig& config,
                             Task task) {
    if (pos.size() < 2 || neg.size() < 2) throw InputError("pca checker: need at least 2 samples per class");
    const DifferenceSet diffs = build_difference_vectors(pos, neg, config.seed);
    if (diffs.n_pairs() < 2) throw InputError("pca checker: fewer than 2 usable pairs");

    Mat diff_rows(static_cast<Eigen::Index>(diffs.n_pairs()), pos.front().size());
    for (std::size_t i = 0; i < diffs.n_pairs(); ++i) diff_rows.row(static_cast<Eigen::Index>(i)) = diffs.diffs[i].transpose();
    Mat pos_rows(static_cast<Eigen::Index>(pos.size()), pos.front().size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos_rows.row(static_cast<Eigen::Index>(i)) = pos[i].transpose();

    PcaChecker checker;
    checker.task = task;
    checker.pca = pca_fit(diff_rows, kPcaCheckerComponents, config.center, &pos_rows);
    checker.train_meta.seed = config.seed;
    checker.train_meta.n_pairs = diffs.n_pairs();

    const auto n = static_cast<Eigen::Index>(pos.size() + neg.size());
    Mat proj(n, kPcaCheckerComponents);
    std::vector<int> labels;
    labels.reserve(static_cast<std::size_t>(n));
    Eigen::Index row = 0;
    for (const auto& v : pos) {
        proj.row(row++) = pca_project(checker.pca, v).transpose();
        labels.push_back(1);
    }
    for (const auto& v : neg) {
        proj.row(row++) = pca_project(checker.pca, v).transpose();
        labels.push_back(0);
    }

    const Vec mu = proj.colwise().mean().transpose();
    Vec sd = ((proj.rowwise() - mu.transpose()).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
    for (Eigen::Index j = 0; j < sd.size(); ++j) {
        if (!(sd(j) > 0.0)) sd(j) = 1.0;
    }
    const Mat z = (proj.rowwise() - mu.transpose()).array().rowwise() / sd.transpose().array();
    const LogisticModel fit = logistic_fit(z, labels, config.logistic);
    checker.logit.weights = fit.weights.cwiseQuotient(sd);
    checker.logit.bias = fit.bias - checker.logit.weights.dot(mu);
    return checker;
}

PcaChecker train_pca_checker(const std::vector<RepresentationRecord>& records, const PcaCheckerConfig& config) {
    if (records.empty()) throw InputError("pca checker: no training records");
    std::vector<Vec> pos, neg;
    for (const auto& r : records) {
        if (r.task != records.front().task || r.model != records.front().model || r.layer != records.front().layer) {
            throw InputError("pca checker: training records mix tasks, models or layers");
        }
        (r.label == 1 ? pos : neg).push_back(to_eigen(r.vec));
    }
    PcaChecker checker = train_pca_checker(pos, neg, config, records.front().task);
    checker.train_meta.model = records.front().model;
    checker.train_meta.layer = records.front().layer;
    return checker;
}

Decision pca_classify(const PcaChecker& checker, const Vec& v) {
    if (v.size() != checker.pca.dim()) {
        throw InputError("pca checker expects dimension " + std::to_string(checker.pca.dim()) + ", got " +
                         std::to_string(v.size()));
    }
    const double prob = logistic_predict(checker.logit, pca_project(checker.pca, v));
    return {prob > 0.5 ? 1 : 0, prob};
}

std::vector<ProjectionRow> export_projection(const PcaChecker& checker,
                                             const std::vector<RepresentationRecord>& records) {
    std::vector<ProjectionRow> rows;
    rows.reserve(records.size());
    for (const auto& r : records) {
        if (r.vec.size() != static_cast<std::size_t>(checker.pca.dim())) {
            throw InputError("record '" + r.id + "' has dimension " + std::to_string(r.vec.size()) +
                             ", checker expects " + std::to_string(checker.pca.dim()));
        }
        const Vec p = pca_project(checker.pca, to_eigen(r.vec));
        rows.push_back({r.id, p(0), p(1), r.label});
    }
    return rows;
}

nlohmann::ordered_json to_json(const PcaChecker& checker) {
    nlohmann::ordered_json doc;
    doc["kind"] = "pca";
    doc["task"] = std::string(task_code(checker.task));
    doc["mean"] = vec_to_json(checker.pca.mean);
    doc["components"] = mat_to_json(checker.pca.components);
    doc["weights"] = vec_to_json(checker.logit.weights);
    doc["bias"] = checker.logit.bias;
    doc["train_meta"] = {{"seed", checker.train_meta.seed},
                         {"n_pairs", checker.train_meta.n_pairs},
                         {"model", checker.train_meta.model},
                         {"layer", checker.train_meta.layer}};
    return doc;
}

PcaChecker pca_checker_from_json(const nlohmann::ordered_json& doc) {
    try {
        if (doc.at("kind").get<std::string>() != "pca") throw InputError("checker kind is not 'pca'");
        PcaChecker c;
        c.task = parse_task(doc.at("task").get<std::string>());
        c.pca.mean = vec_from_json(doc.at("mean"));
        c.pca.components = mat_from_json(doc.at("components"));
        c.logit.weights = vec_from_json(doc.at("weights"));
        c.logit.bias = doc.at("bias").get<double>();
        const auto& meta = doc.at("train_meta");
        c.train_meta.seed = meta.at("seed").get<std::uint64_t>();
        c.train_meta.n_pairs = meta.at("n_pairs").get<std::size_t>();
        c.train_meta.model = meta.at("model").get<std::string>();
        c.train_meta.layer = meta.at("layer").get<int>();
        if (c.pca.components.rows() != kPcaCheckerComponents || c.logit.weights.size() != kPcaCheckerComponents) {
            throw InputError("pca checker must have exactly 2 components and 2 weights");
        }
        if (c.pca.mean.size() != c.pca.components.cols()) throw InputError("pca checker mean/components mismatch");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed pca checker: ") + e.what());
    }
}

}  // namespace kcheck
