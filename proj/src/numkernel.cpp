#include "kcheck/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kcheck/error.hpp"
#include "kcheck/rng.hpp"

namespace kcheck {

Vec to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

Mat stack_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Mat(0, 0);
    const auto d = static_cast<Eigen::Index>(rows.front().size());
    Mat m(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != d) {
            throw InputError("row " + std::to_string(i) + " has length " + std::to_string(rows[i].size()) +
                             ", expected " + std::to_string(d));
        }
        m.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(rows[i].data(), d);
    }
    return m;
}

// ---------------------------------------------------------------- PCA

namespace {

void orient_by_largest_entry(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> c) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < c.size(); ++j) {
        if (std::abs(c(j)) > std::abs(c(best))) best = j;
    }
    if (c(best) < 0) c = -c;
}

}  // namespace

PcaModel pca_fit(const Mat& rows, int k, bool center, const Mat* sign_reference) {
    const Eigen::Index n = rows.rows();
    const Eigen::Index d = rows.cols();
    if (k < 1) throw InputError("pca: k must be >= 1");
    if (n < k) throw InputError("pca: need at least k=" + std::to_string(k) + " rows, got " + std::to_string(n));
    if (d < k) throw InputError("pca: dimension " + std::to_string(d) + " is smaller than k=" + std::to_string(k));
    if (!rows.allFinite()) throw InputError("pca: input contains non-finite values");

    PcaModel model;
    model.mean = center ? Vec(rows.colwise().mean().transpose()) : Vec::Zero(d);
    const Mat centered = rows.rowwise() - model.mean.transpose();

    Eigen::BDCSVD<Mat> svd(centered, Eigen::ComputeThinV);
    const Vec& s = svd.singularValues();
    const double tol = s.size() ? s(0) * static_cast<double>(std::max(n, d)) * std::numeric_limits<double>::epsilon()
                                : 0.0;
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > tol) ++rank;
    }
    if (rank < k) {
        throw ModelError("pca: input rank is " + std::to_string(rank) + " < k=" + std::to_string(k) +
                         "; achievable k is " + std::to_string(rank));
    }

    model.components = svd.matrixV().leftCols(k).transpose();
    for (int c = 0; c < k; ++c) {
        double ref = 0.0;
        if (sign_reference && sign_reference->rows() > 0) {
            if (sign_reference->cols() != d) throw InputError("pca: sign reference dimension mismatch");
            ref = ((sign_reference->rowwise() - model.mean.transpose()) * model.components.row(c).transpose()).mean();
        }
        if (ref < 0.0) {
            model.components.row(c) *= -1.0;
        } else if (ref == 0.0) {
            orient_by_largest_entry(model.components.row(c));
        }
    }
    return model;
}

Vec pca_project(const PcaModel& model, const Vec& v) {
    if (v.size() != model.components.cols()) {
        throw InputError("pca_project: vector length " + std::to_string(v.size()) + " does not match model dimension " +
                         std::to_string(model.components.cols()));
    }
    return model.components * (v - model.mean);
}

// ---------------------------------------------------------------- logistic

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double logistic_predict(const LogisticModel& model, const Vec& x) {
    if (x.size() != model.weights.size()) {
        throw InputError("logistic_predict: input length " + std::to_string(x.size()) + " does not match " +
                         std::to_string(model.weights.size()));
    }
    return sigmoid(model.weights.dot(x) + model.bias);
}

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

void check_logistic_inputs(const Mat& points, const std::vector<int>& labels) {
    if (points.rows() != static_cast<Eigen::Index>(labels.size())) {
        throw InputError("logistic: point count and label count differ");
    }
    if (points.rows() < 2) throw InputError("logistic: need at least 2 points");
    bool has0 = false, has1 = false;
    for (int y : labels) {
        if (y == 0) {
            has0 = true;
        } else if (y == 1) {
            has1 = true;
        } else {
            throw InputError("logistic: labels must be 0 or 1");
        }
    }
    if (!has0 || !has1) throw InputError("logistic: both classes must be present");
}

}  // namespace

double logistic_loss(const LogisticModel& model, const Mat& points, const std::vector<int>& labels, double reg) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const double z = points.row(i).dot(model.weights) + model.bias;
        total += softplus(z) - labels[static_cast<std::size_t>(i)] * z;
    }
    return total / static_cast<double>(points.rows()) + 0.5 * reg * model.weights.squaredNorm();
}

LogisticModel logistic_fit(const Mat& points, const std::vector<int>& labels, const LogisticOptions& opts,
                           std::vector<double>* loss_trace) {
    check_logistic_inputs(points, labels);
    const auto n = static_cast<double>(points.rows());
    Vec y(points.rows());
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = labels[static_cast<std::size_t>(i)];

    LogisticModel model{Vec::Zero(points.cols()), 0.0};
    if (loss_trace) loss_trace->push_back(logistic_loss(model, points, labels, opts.reg));
    for (int it = 0; it < opts.iters; ++it) {
        Vec residual = (points * model.weights).array() + model.bias;
        for (Eigen::Index i = 0; i < residual.size(); ++i) residual(i) = sigmoid(residual(i)) - y(i);
        const Vec grad_w = points.transpose() * residual / n + opts.reg * model.weights;
        const double grad_b = residual.sum() / n;
        if (std::sqrt(grad_w.squaredNorm() + grad_b * grad_b) < opts.grad_tol) break;
        model.weights -= opts.step * grad_w;
        model.bias -= opts.step * grad_b;
        if (loss_trace) loss_trace->push_back(logistic_loss(model, points, labels, opts.reg));
    }
    if (!model.weights.allFinite() || !std::isfinite(model.bias)) throw ModelError("logistic: parameters diverged");
    return model;
}

// ---------------------------------------------------------------- network

std::vector<int> FeedForwardNet::layer_sizes() const {
    std::vector<int> sizes;
    if (layers.empty()) return sizes;
    sizes.push_back(input_dim());
    for (const auto& l : layers) sizes.push_back(static_cast<int>(l.weight.rows()));
    return sizes;
}

std::size_t FeedForwardNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

void FeedForwardNet::validate() const {
    if (layers.empty()) throw InputError("network has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.weight.rows() == 0 || l.weight.cols() == 0) throw InputError("network layer has an empty weight");
        if (l.bias.size() != l.weight.rows()) throw InputError("network bias length does not match weight rows");
        if (i > 0 && l.weight.cols() != layers[i - 1].weight.rows()) {
            throw InputError("network layer " + std::to_string(i) + " input size does not chain");
        }
        if (!l.weight.allFinite() || !l.bias.allFinite()) throw InputError("network parameters are not finite");
    }
}

FeedForwardNet make_network(const std::vector<int>& sizes, bool normalize_output, std::uint64_t seed) {
    if (sizes.size() < 2) throw InputError("network needs at least input and output sizes");
    for (int s : sizes) {
        if (s <= 0) throw InputError("network layer sizes must be positive");
    }
    SplitMix64 rng(seed);
    FeedForwardNet net;
    net.normalize_output = normalize_output;
    for (std::size_t i = 1; i < sizes.size(); ++i) {
        const double bound = std::sqrt(6.0 / sizes[i - 1]);
        DenseLayer layer{Mat(sizes[i], sizes[i - 1]), Vec::Zero(sizes[i])};
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

namespace {

struct ForwardTrace {
    std::vector<Vec> inputs;  // input to each layer
    std::vector<Vec> pre;     // pre-activation of each layer
    Vec output;               // after optional normalization
    double norm = 1.0;        // norm of the raw output when normalizing
};

ForwardTrace run_forward(const FeedForwardNet& net, const Vec& input) {
    if (input.size() != net.input_dim()) {
        throw InputError("network input length " + std::to_string(input.size()) + " does not match " +
                         std::to_string(net.input_dim()));
    }
    ForwardTrace t;
    Vec a = input;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        t.inputs.push_back(a);
        Vec z = net.layers[l].weight * a + net.layers[l].bias;
        t.pre.push_back(z);
        a = (l + 1 < net.layers.size()) ? Vec(z.cwiseMax(0.0)) : z;
    }
    if (!a.allFinite()) throw ModelError("network produced a non-finite output");
    if (net.normalize_output) {
        t.norm = a.norm();
        if (!(t.norm > 0.0)) throw ModelError("network output is the zero vector; cannot normalize");
        a /= t.norm;
    }
    t.output = std::move(a);
    return t;
}

void run_backward(const FeedForwardNet& net, const ForwardTrace& t, const Vec& grad_output, NetGradient& grad) {
    Vec g = grad_output;
    if (net.normalize_output) g = (g - t.output * t.output.dot(g)) / t.norm;
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        if (l + 1 < net.layers.size()) g = g.cwiseProduct((t.pre[l].array() > 0.0).cast<double>().matrix());
        grad.layers[l].weight.noalias() += g * t.inputs[l].transpose();
        grad.layers[l].bias += g;
        if (l > 0) g = net.layers[l].weight.transpose() * g;
    }
}

}  // namespace

Vec forward(const FeedForwardNet& net, const Vec& input) { return run_forward(net, input).output; }

NetGradient NetGradient::zeros_like(const FeedForwardNet& net) {
    NetGradient g;
    for (const auto& l : net.layers) {
        g.layers.push_back({Mat::Zero(l.weight.rows(), l.weight.cols()), Vec::Zero(l.bias.size())});
    }
    return g;
}

NetGradient& NetGradient::operator+=(const NetGradient& other) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].weight += other.layers[i].weight;
        layers[i].bias += other.layers[i].bias;
    }
    return *this;
}

NetGradient& NetGradient::operator*=(double s) {
    for (auto& l : layers) {
        l.weight *= s;
        l.bias *= s;
    }
    return *this;
}

double NetGradient::squared_norm() const {
    double total = 0.0;
    for (const auto& l : layers) total += l.weight.squaredNorm() + l.bias.squaredNorm();
    return total;
}

namespace {

struct LossTerms {
    double loss;
    double pull;  // coefficient on 1/2 |a - p|^2
    double push;  // coefficient on the hinge term (0 when inactive)
};

LossTerms loss_terms(const Vec& a, const Vec& p, const Vec& n, double margin, HalfScope scope) {
    const double pos_dist2 = (a - p).squaredNorm();
    const double hinge = margin - (a - n).squaredNorm();
    const bool active = hinge > 0.0;
    if (scope == HalfScope::WholeSum) return {0.5 * (pos_dist2 + (active ? hinge : 0.0)), 1.0, active ? 0.5 : 0.0};
    return {0.5 * pos_dist2 + (active ? hinge : 0.0), 1.0, active ? 1.0 : 0.0};
}

void check_margin(double margin) {
    if (!(margin > 0.0) || !std::isfinite(margin)) throw InputError("contrastive loss: margin must be positive");
}

}  // namespace

ContrastiveLoss contrastive_loss_grad(const FeedForwardNet& net, const Vec& anchor, const Vec& positive,
                                      const Vec& negative, double margin, HalfScope scope) {
    check_margin(margin);
    const ForwardTrace ta = run_forward(net, anchor);
    const ForwardTrace tp = run_forward(net, positive);
    const ForwardTrace tn = run_forward(net, negative);
    const Vec& a = ta.output;
    const Vec& p = tp.output;
    const Vec& n = tn.output;
    const LossTerms terms = loss_terms(a, p, n, margin, scope);
    if (!std::isfinite(terms.loss)) throw ModelError("contrastive loss is not finite");

    // d(1/2|a-p|^2) = (a-p) da - (a-p) dp ; d(m - |a-n|^2) = -2(a-n) da + 2(a-n) dn
    const Vec ga = terms.pull * (a - p) - terms.push * 2.0 * (a - n);
    const Vec gp = -terms.pull * (a - p);
    const Vec gn = terms.push * 2.0 * (a - n);

    ContrastiveLoss out{terms.loss, NetGradient::zeros_like(net)};
    run_backward(net, ta, ga, out.grad);
    run_backward(net, tp, gp, out.grad);
    if (terms.push != 0.0) run_backward(net, tn, gn, out.grad);
    return out;
}

double contrastive_loss(const FeedForwardNet& net, const Vec& anchor, const Vec& positive, const Vec& negative,
                        double margin, HalfScope scope) {
    check_margin(margin);
    const double loss = loss_terms(forward(net, anchor), forward(net, positive), forward(net, negative), margin, scope).loss;
    if (!std::isfinite(loss)) throw ModelError("contrastive loss is not finite");
    return loss;
}

void apply_gradient(FeedForwardNet& net, const NetGradient& grad, double step) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        net.layers[i].weight -= step * grad.layers[i].weight;
        net.layers[i].bias -= step * grad.layers[i].bias;
    }
}

AdamState AdamState::for_net(const FeedForwardNet& net) {
    AdamState s;
    s.m = NetGradient::zeros_like(net);
    s.v = NetGradient::zeros_like(net);
    return s;
}

void adam_step(FeedForwardNet& net, const NetGradient& grad, double step, AdamState& state) {
    ++state.t;
    const double c1 = 1.0 - std::pow(state.beta1, state.t);
    const double c2 = 1.0 - std::pow(state.beta2, state.t);
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        param.array() -= step * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
    };
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        update(net.layers[i].weight, state.m.layers[i].weight, state.v.layers[i].weight, grad.layers[i].weight);
        update(net.layers[i].bias, state.m.layers[i].bias, state.v.layers[i].bias, grad.layers[i].bias);
    }
}

double cosine_sim(const Vec& u, const Vec& v) {
    if (u.size() != v.size()) throw InputError("cosine_sim: length mismatch");
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) throw InputError("cosine_sim: zero vector");
    const double c = u.dot(v) / (nu * nv);
    return std::clamp(c, -1.0, 1.0);
}

}  // namespace kcheck
