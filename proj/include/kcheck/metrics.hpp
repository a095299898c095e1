#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace kcheck {

struct Confusion {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    void add(int truth, int predicted);
};

Confusion confusion_from(const std::vector<int>& truth, const std::vector<int>& predicted);

struct BinaryMetrics {
    double acc = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// precision := 0 when tp + fp == 0, recall := 0 when tp + fn == 0,
// f1 := 0 when precision + recall == 0. Throws InputError on an empty table.
BinaryMetrics binary_metrics(const Confusion& conf);

enum class ScoreDirection { HigherIsPositive, LowerIsPositive };

struct RocCurve {
    std::vector<double> fpr;
    std::vector<double> tpr;
    // Threshold reached at each point; a sample is called positive when its
    // score is at or beyond the threshold in the curve's direction. The
    // first entry is +inf (-inf for LowerIsPositive), the empty selection.
    std::vector<double> thresholds;

    std::size_t size() const { return fpr.size(); }
};

/// One point per distinct score (tied scores form a single step), from
/// (0,0) to (1,1). Throws InputError unless both classes are present.
RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels,
                   ScoreDirection direction = ScoreDirection::HigherIsPositive);

// Trapezoidal area under the curve.
double auc(const RocCurve& curve);

// Emission helpers for the report formats.
void write_metrics_csv_header(std::ostream& out);  // method,task,acc,precision,recall,f1,auc
void write_metrics_csv_row(std::ostream& out, const std::string& method, const std::string& task,
                           const BinaryMetrics& m, const double* auc_value);
void write_roc_csv(std::ostream& out, const RocCurve& curve);  // fpr,tpr,threshold

// Shortest round-trip decimal; "inf" / "-inf" for infinities.
std::string csv_number(double value);

}  // namespace kcheck
