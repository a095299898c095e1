#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kcheck/decision.hpp"
#include "kcheck/numkernel.hpp"
#include "kcheck/repstore.hpp"

namespace kcheck {

enum class Optimizer { Adam, Sgd };

std::string_view optimizer_name(Optimizer opt);
Optimizer parse_optimizer(std::string_view name);

struct TrainConfig {
    double margin = 1.0;
    int epochs = 100;
    int batch = 32;
    double step = 1e-3;
    std::uint64_t seed = 0;
    int hidden = 256;
    int out_dim = 128;  // h
    double holdout_frac = 0.2;
    bool normalize_output = true;
    HalfScope half_scope = HalfScope::FirstTerm;
    Optimizer optimizer = Optimizer::Adam;

    void validate() const;  // throws InputError
};

struct ContrastiveTrainMeta {
    std::uint64_t seed = 0;
    double margin = 1.0;
    int epochs = 0;
    double step = 0.0;
    Optimizer optimizer = Optimizer::Adam;
    int h = 0;
    int batch = 0;
    double holdout_frac = 0.0;
    std::size_t n_train_pos = 0;
    std::size_t n_train_neg = 0;
    std::size_t n_holdout_pos = 0;
    std::size_t n_holdout_neg = 0;
    std::string model;
    int layer = 0;
};

struct ContrastiveChecker {
    Task task = Task::T1Internal;
    FeedForwardNet net;
    std::vector<Vec> pos_refs;  // embedded training positives
    double threshold = 0.0;
    ContrastiveTrainMeta train_meta;

    int dim() const { return net.input_dim(); }
};

struct ContrastiveTrainResult {
    ContrastiveChecker checker;
    std::vector<double> epoch_loss;  // mean loss over each epoch's triplets
    double probe_loss_initial = 0.0;  // fixed probe triplets, before training
    double probe_loss_final = 0.0;    // same probe triplets, after training
};

/// Trains f_theta with the margin loss on seeded triplets (anchor i, positive
/// k != i, negative j), one triplet per anchor per epoch, averaged over
/// mini-batches of anchors and applied with Adam or plain gradient descent.
///
/// A holdout slice (holdout_frac of each class) is kept out of training and
/// used only to calibrate the threshold; pos_refs are the embeddings of the
/// training-slice positives. Classes too small to split (fewer than 3
/// positives or 2 negatives) are calibrated on the training slice instead.
///
/// Throws InputError for fewer than 2 positives or no negatives and
/// ModelError (naming the epoch) when the loss becomes non-finite.
ContrastiveTrainResult train_contrastive(const std::vector<Vec>& pos, const std::vector<Vec>& neg,
                                         const TrainConfig& config, Task task = Task::T1Internal);

ContrastiveTrainResult train_contrastive(const std::vector<RepresentationRecord>& records, const TrainConfig& config);

// Mean cosine similarity between f(v) and every reference embedding.
double contrastive_score(const ContrastiveChecker& checker, const Vec& v);

/// Midpoint threshold maximizing balanced accuracy, where a score is called
/// positive iff it is strictly above the threshold. Candidates are the
/// midpoints between adjacent distinct pooled scores plus the sentinels
/// min - 1 and max + 1; ties go to the smallest candidate.
double calibrate_threshold(const std::vector<double>& scores_pos, const std::vector<double>& scores_neg);

// label = 1 iff score > threshold.
Decision contrastive_classify(const ContrastiveChecker& checker, const Vec& v);

struct ScoreRow {
    std::string id;
    double score = 0.0;
    int label = 0;  // ground-truth label of the record
};

std::vector<ScoreRow> export_scores(const ContrastiveChecker& checker,
                                    const std::vector<RepresentationRecord>& records);

nlohmann::ordered_json to_json(const ContrastiveChecker& checker);
ContrastiveChecker contrastive_checker_from_json(const nlohmann::ordered_json& doc);

}  // namespace kcheck
