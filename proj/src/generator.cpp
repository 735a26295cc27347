#include "slowfast/generator.hpp"

#include <cmath>

namespace slowfast {

Vec TwiceDiff::gradient_at(CVecRef u) const {
    if (grad) return grad(u);
    const auto d = u.size();
    Vec g(d), up = u, um = u;
    for (Eigen::Index i = 0; i < d; ++i) {
        up(i) = u(i) + fd_step;
        um(i) = u(i) - fd_step;
        g(i) = (value(up) - value(um)) / (2.0 * fd_step);
        up(i) = um(i) = u(i);
    }
    return g;
}

Mat TwiceDiff::hessian_at(CVecRef u) const {
    if (hess) return hess(u);
    const auto d = u.size();
    const double e = fd_step;
    Mat H(d, d);
    Vec w = u;
    const double f0 = value(u);
    for (Eigen::Index i = 0; i < d; ++i) {
        w(i) = u(i) + e;
        const double fp = value(w);
        w(i) = u(i) - e;
        const double fm = value(w);
        w(i) = u(i);
        H(i, i) = (fp - 2.0 * f0 + fm) / (e * e);
        for (Eigen::Index j = 0; j < i; ++j) {
            w(i) = u(i) + e; w(j) = u(j) + e;
            const double fpp = value(w);
            w(j) = u(j) - e;
            const double fpm = value(w);
            w(i) = u(i) - e;
            const double fmm = value(w);
            w(j) = u(j) + e;
            const double fmp = value(w);
            w(i) = u(i); w(j) = u(j);
            H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * e * e);
        }
    }
    return H;
}

double apply_generator_fast(const ModelSpec& model, CVecRef z, const TwiceDiff& g, CVecRef y) {
    Vec hv(model.q);
    Mat eta(model.q, model.q);
    model.h(z, y, hv);
    model.eta(z, y, eta);
    const Mat a = eta * eta.transpose();
    return 0.5 * (a.cwiseProduct(g.hessian_at(y))).sum() + hv.dot(g.gradient_at(y));
}

double apply_generator_slow(const ModelSpec& model, CVecRef z, CVecRef y, const TwiceDiff& g) {
    Vec bv(model.p);
    Mat sig(model.p, model.p);
    model.b(z, y, bv);
    model.sigma(z, sig);
    const Mat a = sig * sig.transpose();
    return 0.5 * (a.cwiseProduct(g.hessian_at(z))).sum() + bv.dot(g.gradient_at(z));
}

TwiceDiff lyapunov_weight(const Mat& A, int k) {
    if (k < 1) throw ConfigError("Lyapunov weight order must be >= 1");
    TwiceDiff w;
    w.value = [A, k](CVecRef y) { return std::pow(y.dot(A * y), k); };
    w.grad = [A, k](CVecRef y) -> Vec {
        const double v = y.dot(A * y);
        return (k * std::pow(v, k - 1)) * (2.0 * (A * y));
    };
    w.hess = [A, k](CVecRef y) -> Mat {
        const double v = y.dot(A * y);
        const Vec g = 2.0 * (A * y);
        Mat H = (k * std::pow(v, k - 1)) * (2.0 * A);
        if (k >= 2) H += (k * (k - 1) * std::pow(v, k - 2)) * (g * g.transpose());
        return H;
    };
    return w;
}

}  // namespace slowfast
