#pragma once

// Deterministic numerical primitives shared by both checkers. All arithmetic
// is in double precision.

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace kcheck {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

Vec to_eigen(const std::vector<double>& v);
std::vector<double> to_std(const Vec& v);

// Rows of the result are the given vectors; all must share one length.
Mat stack_rows(const std::vector<std::vector<double>>& rows);

// ---------------------------------------------------------------- PCA

struct PcaModel {
    Vec mean;        // length d; zero when fitted without centering
    Mat components;  // k x d, orthonormal rows ordered by decreasing singular value

    int k() const { return static_cast<int>(components.rows()); }
    int dim() const { return static_cast<int>(components.cols()); }
};

/// Top-k right singular vectors of the (optionally mean-centered) rows.
///
/// Sign convention: when `sign_reference` is given, each component is
/// flipped so that the mean projection of those reference rows (after
/// centering) is >= 0. Components whose reference projection is exactly
/// zero, or all components when no reference is given, are oriented so
/// that their largest-magnitude entry is positive (first such entry wins).
///
/// Throws InputError when n < k or d < k, and ModelError naming the
/// achievable k when the input rank is below k.
PcaModel pca_fit(const Mat& rows, int k, bool center = true, const Mat* sign_reference = nullptr);

Vec pca_project(const PcaModel& model, const Vec& v);

// ---------------------------------------------------------------- logistic

struct LogisticModel {
    Vec weights;
    double bias = 0.0;
};

struct LogisticOptions {
    double reg = 1e-4;  // L2 on weights only
    int iters = 2000;
    double step = 0.1;
    double grad_tol = 1e-8;
};

// L2-regularized mean negative log-likelihood.
double logistic_loss(const LogisticModel& model, const Mat& points, const std::vector<int>& labels, double reg);

/// Full-batch gradient descent from zero initialization. Stops after
/// `iters` steps or once the gradient norm drops below `grad_tol`.
/// Throws InputError unless both classes are present and n >= 2.
LogisticModel logistic_fit(const Mat& points, const std::vector<int>& labels, const LogisticOptions& opts = {},
                           std::vector<double>* loss_trace = nullptr);

double sigmoid(double z);
double logistic_predict(const LogisticModel& model, const Vec& x);

// ---------------------------------------------------------------- network

struct DenseLayer {
    Mat weight;  // out x in
    Vec bias;    // out
};

/// Multilayer perceptron with rectified hidden layers, a linear output
/// layer and optional L2 normalization of the output.
struct FeedForwardNet {
    std::vector<DenseLayer> layers;
    bool normalize_output = true;

    int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }
    std::vector<int> layer_sizes() const;
    std::size_t parameter_count() const;

    // Throws InputError when consecutive dimensions do not chain.
    void validate() const;
};

// He-uniform weights, bound sqrt(6 / fan_in), zero biases.
FeedForwardNet make_network(const std::vector<int>& sizes, bool normalize_output, std::uint64_t seed);

// Throws ModelError on non-finite output or a zero pre-normalization vector.
Vec forward(const FeedForwardNet& net, const Vec& input);

// Per-layer gradients with the same shapes as the network parameters.
struct NetGradient {
    std::vector<DenseLayer> layers;

    static NetGradient zeros_like(const FeedForwardNet& net);
    NetGradient& operator+=(const NetGradient& other);
    NetGradient& operator*=(double s);
    double squared_norm() const;
};

// Where the 1/2 factor of the margin loss applies.
enum class HalfScope { FirstTerm, WholeSum };

struct ContrastiveLoss {
    double loss = 0.0;
    NetGradient grad;
};

/// loss = 1/2 |f(a) - f(p)|^2 + max(0, m - |f(a) - f(n)|^2)
/// (or 1/2 of the whole sum with HalfScope::WholeSum). Exact analytic
/// gradients; the hinge subgradient is 0 when m - |f(a) - f(n)|^2 == 0.
ContrastiveLoss contrastive_loss_grad(const FeedForwardNet& net, const Vec& anchor, const Vec& positive,
                                      const Vec& negative, double margin,
                                      HalfScope scope = HalfScope::FirstTerm);

// Loss only, no gradient bookkeeping.
double contrastive_loss(const FeedForwardNet& net, const Vec& anchor, const Vec& positive, const Vec& negative,
                        double margin, HalfScope scope = HalfScope::FirstTerm);

void apply_gradient(FeedForwardNet& net, const NetGradient& grad, double step);

/// Adam moment estimates (beta1 0.9, beta2 0.999, eps 1e-8) with bias
/// correction.
struct AdamState {
    NetGradient m;
    NetGradient v;
    int t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_net(const FeedForwardNet& net);
};

void adam_step(FeedForwardNet& net, const NetGradient& grad, double step, AdamState& state);

// u.v / (|u| |v|); throws InputError for a zero vector or length mismatch.
double cosine_sim(const Vec& u, const Vec& v);

}  // namespace kcheck
