#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcheck/decision.hpp"
#include "kcheck/numkernel.hpp"
#include "kcheck/repstore.hpp"

namespace kcheck {

inline constexpr int kPcaCheckerComponents = 2;

struct DifferenceSet {
    std::vector<Vec> diffs;  // D_n = (-1)^n (v_n+ - v_n-)
    std::size_t n_pairs() const { return diffs.size(); }
};

/// Permutes each class with its own SplitMix64(seed) stream, pairs by index
/// and emits min(N+, N-) alternating-sign differences. Because the two
/// permutations depend only on the seed and the class sizes, swapping the
/// roles of the classes yields the same pairs with negated differences.
DifferenceSet build_difference_vectors(const std::vector<Vec>& pos, const std::vector<Vec>& neg, std::uint64_t seed);

struct PcaCheckerConfig {
    bool center = true;
    std::uint64_t seed = 0;
    LogisticOptions logistic;
};

struct PcaTrainMeta {
    std::uint64_t seed = 0;
    std::size_t n_pairs = 0;
    std::string model;
    int layer = 0;
};

struct PcaChecker {
    Task task = Task::T1Internal;
    PcaModel pca;
    LogisticModel logit;
    PcaTrainMeta train_meta;

    int dim() const { return pca.dim(); }
};

/// PCA (k=2) on the difference vectors, then logistic regression on the
/// projections of the raw training samples (1 = positive, 0 = negative).
/// Projections are standardized for the fit and the scaling is folded back
/// into the stored weights, so classification is sigmoid(w . proj + b).
PcaChecker train_pca_checker(const std::vector<Vec>& pos, const std::vector<Vec>& neg, const PcaCheckerConfig& config,
                             Task task = Task::T1Internal);

// Record-based convenience; records must share one task, model and layer.
PcaChecker train_pca_checker(const std::vector<RepresentationRecord>& records, const PcaCheckerConfig& config);

// label = 1 iff prob > 0.5; an exact 0.5 is negative.
Decision pca_classify(const PcaChecker& checker, const Vec& v);

struct ProjectionRow {
    std::string id;
    double x1 = 0.0;
    double x2 = 0.0;
    int label = 0;  // ground-truth label of the record
};

std::vector<ProjectionRow> export_projection(const PcaChecker& checker,
                                             const std::vector<RepresentationRecord>& records);

nlohmann::ordered_json to_json(const PcaChecker& checker);
PcaChecker pca_checker_from_json(const nlohmann::ordered_json& doc);

}  // namespace kcheck
