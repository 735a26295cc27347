#include "slowfast/law.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace slowfast {

const HermiteRule& hermite_rule(int order) {
    static std::mutex mu;
    static std::map<int, HermiteRule> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(order);
    if (it != cache.end()) return it->second;
    if (order < 1) throw ConfigError("Gauss-Hermite order must be positive");
    Mat jacobi = Mat::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        const double off = std::sqrt(k / 2.0);
        jacobi(k, k - 1) = off;
        jacobi(k - 1, k) = off;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(jacobi);
    HermiteRule rule;
    rule.nodes = es.eigenvalues();
    rule.weights.resize(order);
    for (int i = 0; i < order; ++i) {
        const double v = es.eigenvectors()(0, i);
        rule.weights(i) = std::sqrt(std::numbers::pi) * v * v;
    }
    return cache.emplace(order, std::move(rule)).first->second;
}

GaussianLaw::GaussianLaw(Vec mean, Mat cov, int order) : mean_(std::move(mean)), cov_(std::move(cov)), order_(order) {
    const auto q = mean_.size();
    if (cov_.rows() != q || cov_.cols() != q) throw ConfigError("GaussianLaw: covariance has wrong shape");
    Eigen::LLT<Mat> llt(cov_);
    if (llt.info() != Eigen::Success) {
        // Degenerate directions: use the symmetric square root.
        Eigen::SelfAdjointEigenSolver<Mat> es(cov_);
        if (es.eigenvalues().minCoeff() < -1e-12) throw ConfigError("GaussianLaw: covariance is not PSD");
        factor_ = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    } else {
        factor_ = llt.matrixL();
    }
}

Estimate GaussianLaw::expect(const ScalarFn& f) const {
    const auto& rule = hermite_rule(order_);
    const int q = dim();
    const double norm = std::pow(std::numbers::pi, -0.5 * q);
    std::vector<int> idx(static_cast<std::size_t>(q), 0);
    Vec u(q), y(q);
    double acc = 0.0, comp = 0.0;
    while (true) {
        double w = 1.0;
        for (int i = 0; i < q; ++i) {
            u(i) = std::numbers::sqrt2 * rule.nodes(idx[static_cast<std::size_t>(i)]);
            w *= rule.weights(idx[static_cast<std::size_t>(i)]);
        }
        y.noalias() = mean_ + factor_ * u;
        // Neumaier summation keeps the result order-stable.
        const double term = w * f(y);
        const double t = acc + term;
        comp += std::abs(acc) >= std::abs(term) ? (acc - t) + term : (term - t) + acc;
        acc = t;
        int i = 0;
        while (i < q && ++idx[static_cast<std::size_t>(i)] == order_) idx[static_cast<std::size_t>(i++)] = 0;
        if (i == q) break;
    }
    return {norm * (acc + comp), 0.0};
}

}  // namespace slowfast
