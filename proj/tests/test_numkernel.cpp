#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "kcheck/error.hpp"
#include "support.hpp"

using namespace kcheck;
using namespace kcheck::testing;

namespace {

// Top-k eigenvectors of the sample covariance, by a symmetric eigensolver.
Mat covariance_top_k(const Mat& rows, int k) {
    const Mat centered = rows.rowwise() - rows.colwise().mean();
    const Mat cov = centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
    Mat out(k, rows.cols());
    for (int i = 0; i < k; ++i) out.row(i) = eig.eigenvectors().col(rows.cols() - 1 - i).transpose();
    return out;
}

double sign_free_distance(const Vec& a, const Vec& b) { return std::min((a - b).cwiseAbs().maxCoeff(), (a + b).cwiseAbs().maxCoeff()); }

}  // namespace

TEST_CASE("pca_fit spot examples") {
    Mat axis(4, 2);
    axis << 1, 0, -1, 0, 2, 0, -2, 0;
    auto m = pca_fit(axis, 1);
    CHECK(m.components(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(m.components(0, 1)) < 1e-12);

    Mat diag(2, 2);
    diag << 1, 1, -1, -1;
    auto d = pca_fit(diag, 1);
    CHECK(d.components(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(d.components(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("pca_fit matches covariance eigenvectors") {
    SplitMix64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        Mat rows = random_mat(50, 8, rng);
        // Stretch axes so that the top eigenvalues are well separated.
        for (int j = 0; j < 8; ++j) rows.col(j) *= 1.0 + j;
        auto model = pca_fit(rows, 2);
        const Mat oracle = covariance_top_k(rows, 2);
        for (int c = 0; c < 2; ++c) CHECK(sign_free_distance(model.components.row(c), oracle.row(c)) < 1e-8);
        const Mat gram = model.components * model.components.transpose();
        CHECK((gram - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("pca sign convention follows the reference rows") {
    SplitMix64 rng(4);
    Mat rows = random_mat(30, 5, rng);
    rows.col(0) *= 10.0;
    Mat ref(1, 5);
    ref << -1, 0, 0, 0, 0;
    auto model = pca_fit(rows, 1, true, &ref);
    const Vec centered_ref = ref.row(0).transpose() - model.mean;
    CHECK(model.components.row(0).dot(centered_ref) >= 0.0);
}

TEST_CASE("pca_fit errors") {
    SplitMix64 rng(1);
    CHECK_THROWS_AS(pca_fit(random_mat(1, 4, rng), 2), InputError);
    CHECK_THROWS_AS(pca_fit(random_mat(5, 1, rng), 2), InputError);
    Mat rank_one(5, 3);
    for (int i = 0; i < 5; ++i) rank_one.row(i) << i, 2 * i, 3 * i;
    CHECK_THROWS_AS(pca_fit(rank_one, 2), ModelError);
}

TEST_CASE("pca_project matches dot products") {
    PcaModel m{Vec::Zero(2), Mat::Identity(2, 2)};
    CHECK(pca_project(m, vec2(2, 0)).isApprox(vec2(2, 0)));
    PcaModel c{Vec::Constant(2, 1.0), Mat(1, 2)};
    c.components << 1, 0;
    CHECK(pca_project(c, Vec::Constant(2, 1.0))(0) == 0.0);

    SplitMix64 rng(8);
    Mat rows = random_mat(40, 6, rng);
    auto model = pca_fit(rows, 2);
    for (int i = 0; i < 50; ++i) {
        const Vec v = random_vec(6, rng);
        const Vec p = pca_project(model, v);
        for (int c2 = 0; c2 < 2; ++c2) {
            double dot = 0.0;
            for (int j = 0; j < 6; ++j) dot += model.components(c2, j) * (v(j) - model.mean(j));
            CHECK(std::abs(p(c2) - dot) < 1e-12);
        }
    }
}

TEST_CASE("logistic regression") {
    SUBCASE("separable") {
        Mat pts(40, 2);
        std::vector<int> labels;
        for (int i = 0; i < 40; ++i) {
            pts.row(i) << (i % 2 ? 1.0 : -1.0), 0.0;
            labels.push_back(i % 2);
        }
        auto model = logistic_fit(pts, labels);
        for (int i = 0; i < 40; ++i) CHECK((logistic_predict(model, pts.row(i).transpose()) > 0.5) == (labels[i] == 1));
    }
    SUBCASE("mirror symmetric data has zero bias") {
        SplitMix64 rng(2);
        Mat pts(60, 3);
        std::vector<int> labels;
        for (int i = 0; i < 30; ++i) {
            const Vec v = random_vec(3, rng) + Vec::Constant(3, 0.5);
            pts.row(2 * i) = v.transpose();
            pts.row(2 * i + 1) = -v.transpose();
            labels.push_back(1);
            labels.push_back(0);
        }
        auto model = logistic_fit(pts, labels);
        CHECK(std::abs(model.bias) < 1e-6);
    }
    SUBCASE("fit reaches a stationary point of the loss") {
        SplitMix64 rng(3);
        Mat pts = random_mat(80, 2, rng);
        std::vector<int> labels;
        for (int i = 0; i < 80; ++i) labels.push_back(pts(i, 0) + 0.8 * rng.normal() > 0 ? 1 : 0);
        LogisticOptions opts;
        opts.reg = 1e-2;
        opts.iters = 200000;
        opts.step = 0.5;
        opts.grad_tol = 1e-10;
        std::vector<double> trace;
        auto model = logistic_fit(pts, labels, opts, &trace);
        for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-15);
        const double h = 1e-6;
        auto perturbed = [&](int which, double delta) {
            LogisticModel m = model;
            if (which < 2) {
                m.weights(which) += delta;
            } else {
                m.bias += delta;
            }
            return logistic_loss(m, pts, labels, opts.reg);
        };
        for (int p = 0; p < 3; ++p) CHECK(std::abs((perturbed(p, h) - perturbed(p, -h)) / (2 * h)) < 1e-6);
    }
    SUBCASE("single class is rejected") {
        Mat pts = Mat::Ones(4, 2);
        CHECK_THROWS_AS(logistic_fit(pts, {1, 1, 1, 1}), InputError);
    }
    LogisticModel zero{Vec::Zero(2), 0.0};
    CHECK(logistic_predict(zero, vec2(3, -7)) == 0.5);
    LogisticModel unit{vec2(1, 0), 0.0};
    CHECK(logistic_predict(unit, vec2(1, 0)) == doctest::Approx(0.7310585786).epsilon(1e-10));
}

namespace {

// Flattens the analytic gradient and a central finite-difference estimate
// over every parameter; returns |g - fd| / max(|g| + |fd|, 1e-12).
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

}  // namespace

TEST_CASE("contrastive gradient matches finite differences") {
    SplitMix64 rng(77);
    int checked = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const int in = 2 + static_cast<int>(rng.uniform_index(5));
        const int hidden = 2 + static_cast<int>(rng.uniform_index(6));
        const int out = 2 + static_cast<int>(rng.uniform_index(4));
        const bool normalize = trial % 2 == 0;
        auto net = make_network({in, hidden, out}, normalize, rng.next());
        for (auto& l : net.layers) l.bias = random_vec(static_cast<int>(l.bias.size()), rng, 0.1);
        const Vec a = random_vec(in, rng), p = random_vec(in, rng), n = random_vec(in, rng);
        const double margin = rng.uniform(0.1, 3.0);
        const auto scope = trial % 4 < 2 ? HalfScope::FirstTerm : HalfScope::WholeSum;
        const Vec fa = forward(net, a), fn = forward(net, n);
        if (std::abs(margin - (fa - fn).squaredNorm()) < 1e-3) continue;
        CHECK(gradient_relative_error(net, a, p, n, margin, scope) <= 1e-4);
        ++checked;
    }
    CHECK(checked >= 30);
}

TEST_CASE("contrastive loss spot values") {
    FeedForwardNet identity;
    identity.normalize_output = false;
    identity.layers.push_back({Mat::Identity(2, 2), Vec::Zero(2)});
    const Vec zero = Vec::Zero(2);
    CHECK(contrastive_loss(identity, zero, zero, vec2(0.5, 0), 1.0) == doctest::Approx(0.75));
    CHECK(contrastive_loss(identity, zero, zero, vec2(2, 0), 1.0) == 0.0);
    CHECK(contrastive_loss(identity, zero, zero, vec2(0.5, 0), 1.0, HalfScope::WholeSum) ==
          doctest::Approx(0.375));
    const auto lg = contrastive_loss_grad(identity, zero, zero, vec2(2, 0), 1.0);
    CHECK(lg.loss == 0.0);
    CHECK(lg.grad.squared_norm() == 0.0);
}

TEST_CASE("network construction and validation") {
    auto net = make_network({4, 8, 3}, true, 5);
    CHECK(net.layer_sizes() == std::vector<int>{4, 8, 3});
    CHECK(net.parameter_count() == 4 * 8 + 8 + 8 * 3 + 3);
    CHECK(forward(net, Vec::Ones(4)).norm() == doctest::Approx(1.0));
    const double bound = std::sqrt(6.0 / 4.0);
    CHECK(net.layers[0].weight.cwiseAbs().maxCoeff() <= bound);
    auto same = make_network({4, 8, 3}, true, 5);
    CHECK(same.layers[1].weight == net.layers[1].weight);
    net.layers[1].weight = Mat::Zero(3, 7);
    CHECK_THROWS_AS(net.validate(), InputError);
}

TEST_CASE("adam and sgd steps decrease a loss") {
    SplitMix64 rng(6);
    auto net = make_network({3, 5, 2}, false, 9);
    const Vec a = random_vec(3, rng), p = random_vec(3, rng), n = random_vec(3, rng);
    const double before = contrastive_loss(net, a, p, n, 50.0);
    auto adam_net = net;
    auto state = AdamState::for_net(adam_net);
    for (int i = 0; i < 20; ++i) adam_step(adam_net, contrastive_loss_grad(adam_net, a, p, n, 50.0).grad, 1e-2, state);
    CHECK(state.t == 20);
    CHECK(contrastive_loss(adam_net, a, p, n, 50.0) < before);
    auto sgd_net = net;
    apply_gradient(sgd_net, contrastive_loss_grad(sgd_net, a, p, n, 50.0).grad, 1e-3);
    CHECK(contrastive_loss(sgd_net, a, p, n, 50.0) < before);
}

TEST_CASE("cosine similarity") {
    CHECK(cosine_sim(vec2(1, 0), vec2(0, 1)) == 0.0);
    CHECK(cosine_sim(vec2(1, 1), vec2(2, 2)) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(cosine_sim(Vec::Zero(2), Vec::Ones(2)), InputError);
    CHECK_THROWS_AS(cosine_sim(Vec::Ones(3), Vec::Ones(2)), InputError);
    SplitMix64 rng(10);
    for (int i = 0; i < 100; ++i) {
        const Vec u = random_vec(7, rng), v = random_vec(7, rng);
        double dot = 0, nu = 0, nv = 0;
        for (int j = 0; j < 7; ++j) {
            dot += u(j) * v(j);
            nu += u(j) * u(j);
            nv += v(j) * v(j);
        }
        CHECK(std::abs(cosine_sim(u, v) - dot / std::sqrt(nu * nv)) < 1e-12);
    }
}
