#pragma once

#include "slowfast/model.hpp"

namespace slowfast {

/// A C^2 function with optional analytic derivatives.
/// Missing derivatives are replaced by central differences with step `fd_step`.
struct TwiceDiff {
    ScalarFn value;
    std::function<Vec(CVecRef)> grad;
    std::function<Mat(CVecRef)> hess;
    double fd_step = 1e-4;

    Vec gradient_at(CVecRef u) const;
    Mat hessian_at(CVecRef u) const;
};

/// Itô generator of the frozen diffusion at unit scale separation:
///   L^z g(y) = 1/2 Tr(eta eta^T(z,y) D^2 g(y)) + h(z,y) . grad g(y).
double apply_generator_fast(const ModelSpec& model, CVecRef z, const TwiceDiff& g, CVecRef y);

/// Generator of the slow equation with the fast state frozen:
///   1/2 Tr(sigma sigma^T(z) D^2 g(z)) + b(z,y) . grad g(z).
double apply_generator_slow(const ModelSpec& model, CVecRef z, CVecRef y, const TwiceDiff& g);

/// The Lyapunov weight V_k(y) = <y, A y>^k with analytic derivatives.
TwiceDiff lyapunov_weight(const Mat& A, int k);

}  // namespace slowfast
