#include "kcheck/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "kcheck/error.hpp"
#include "kcheck/repstore.hpp"

namespace kcheck {

void Confusion::add(int truth, int predicted) {
    if (truth == 1) {
        (predicted == 1 ? tp : fn) += 1;
    } else {
        (predicted == 1 ? fp : tn) += 1;
    }
}

Confusion confusion_from(const std::vector<int>& truth, const std::vector<int>& predicted) {
    if (truth.size() != predicted.size()) throw InputError("confusion: length mismatch");
    Confusion c;
    for (std::size_t i = 0; i < truth.size(); ++i) c.add(truth[i], predicted[i]);
    return c;
}

BinaryMetrics binary_metrics(const Confusion& conf) {
    if (conf.total() == 0) throw InputError("binary_metrics: empty confusion table");
    const auto tp = static_cast<double>(conf.tp);
    BinaryMetrics m;
    m.acc = static_cast<double>(conf.tp + conf.tn) / static_cast<double>(conf.total());
    m.precision = (conf.tp + conf.fp) ? tp / static_cast<double>(conf.tp + conf.fp) : 0.0;
    m.recall = (conf.tp + conf.fn) ? tp / static_cast<double>(conf.tp + conf.fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels, ScoreDirection direction) {
    if (scores.size() != labels.size()) throw InputError("roc_curve: scores and labels differ in length");
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += (y == 1);
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw InputError("roc_curve: both classes must be present");

    // Most-positive scores first.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    const bool higher = direction == ScoreDirection::HigherIsPositive;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return higher ? scores[a] > scores[b] : scores[a] < scores[b];
    });

    RocCurve curve;
    const double inf = std::numeric_limits<double>::infinity();
    curve.fpr.push_back(0.0);
    curve.tpr.push_back(0.0);
    curve.thresholds.push_back(higher ? inf : -inf);
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] == 1 ? tp : fp) += 1;
        curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(n_neg));
        curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
        curve.thresholds.push_back(s);
    }
    // Exact endpoint regardless of rounding.
    curve.fpr.back() = 1.0;
    curve.tpr.back() = 1.0;
    return curve;
}

double auc(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) * 0.5;
    }
    return area;
}

std::string csv_number(double value) {
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    if (std::isnan(value)) return "nan";
    return format_double(value);
}

void write_metrics_csv_header(std::ostream& out) { out << "method,task,acc,precision,recall,f1,auc\n"; }

void write_metrics_csv_row(std::ostream& out, const std::string& method, const std::string& task,
                           const BinaryMetrics& m, const double* auc_value) {
    out << method << ',' << task << ',' << csv_number(m.acc) << ',' << csv_number(m.precision) << ','
        << csv_number(m.recall) << ',' << csv_number(m.f1) << ',' << (auc_value ? csv_number(*auc_value) : "") << '\n';
}

void write_roc_csv(std::ostream& out, const RocCurve& curve) {
    out << "fpr,tpr,threshold\n";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        out << csv_number(curve.fpr[i]) << ',' << csv_number(curve.tpr[i]) << ',' << csv_number(curve.thresholds[i])
            << '\n';
    }
}

}  // namespace kcheck
