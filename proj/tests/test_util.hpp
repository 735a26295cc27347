#pragma once

#include "slowfast/model.hpp"
#include "slowfast/stats.hpp"

#include <cmath>
#include <vector>

namespace testutil {

using namespace slowfast;

/// Scalar model from plain scalar coefficient functions.
template <class B, class S, class H, class E>
ModelSpec scalar_model(B b, S sigma, H h, E eta, double x0 = 0.0, double y0 = 0.0, bool eta_y = false) {
    ModelSpec m;
    m.name = "custom";
    m.p = m.q = 1;
    m.b = [b](CVecRef x, CVecRef y, VecRef out) { out(0) = b(x(0), y(0)); };
    m.sigma = [sigma](CVecRef x, MatRef out) { out(0, 0) = sigma(x(0)); };
    m.h = [h](CVecRef x, CVecRef y, VecRef out) { out(0) = h(x(0), y(0)); };
    m.eta = [eta](CVecRef x, CVecRef y, MatRef out) { out(0, 0) = eta(x(0), y(0)); };
    m.eta_depends_on_y = eta_y;
    m.x0 = Vec::Constant(1, x0);
    m.y0 = Vec::Constant(1, y0);
    return m;
}

inline Estimate estimate_of(const std::vector<double>& xs) { return mean_se(xs); }

/// Sample variance with a normal-theory standard error.
inline Estimate variance_of(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double m = 0.0;
    for (double x : xs) m += x;
    m /= n;
    std::vector<double> sq;
    sq.reserve(xs.size());
    for (double x : xs) sq.push_back((x - m) * (x - m));
    Estimate e = mean_se(sq);
    e.value *= n / (n - 1.0);
    return e;
}

inline bool within(double est, double target, double tol) { return std::abs(est - target) <= tol; }

}  // namespace testutil
