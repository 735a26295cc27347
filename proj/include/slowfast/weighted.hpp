#pragma once

#include "slowfast/types.hpp"

#include <cstdint>
#include <string>

namespace slowfast {

/// Where weighted sup-norms are sampled: a grid on [-radius, radius] for q = 1,
/// otherwise `points` deterministic draws from the ball plus the origin.
struct NormRegion {
    double radius = 10.0;
    std::size_t points = 4001;
    std::uint64_t seed = 7;
};

struct WeightedNorms {
    double value = 0.0;  ///< sup |f| / (1 + V)
    double grad = 0.0;   ///< sup |grad f| / (1 + V)
};

/// A test function on the fast space together with its gradient, with weighted norms
/// taken against the Lyapunov weight V(y) = <y, A y>.
///
/// The callable is pure, so one instance may be evaluated from many threads.
class WeightedFn {
public:
    WeightedFn() = default;
    WeightedFn(std::string id, ScalarFn f, std::function<Vec(CVecRef)> grad = {}, BatchObservable batch = {});

    const std::string& id() const { return id_; }
    double scale() const { return scale_; }
    bool has_analytic_gradient() const { return static_cast<bool>(grad_); }

    double operator()(CVecRef y) const { return scale_ * f_(y); }
    /// Analytic gradient, or central differences with step 1e-5.
    Vec gradient(CVecRef y) const;
    void eval_batch(CMatRef ys, VecRef out) const;
    BatchObservable as_batch() const;
    ScalarFn as_scalar() const;

    /// c * f; norms scale by |c| exactly.
    WeightedFn scaled(double c) const;
    WeightedNorms norms(const Mat& A, const NormRegion& region = {}) const;
    /// f / max(||f||_*, ||grad f||_*), so the result lies in the unit class; identity when both vanish.
    WeightedFn normalized(const Mat& A, const NormRegion& region = {}) const;
    bool in_unit_class(const Mat& A, const NormRegion& region = {}, double tol = 1e-12) const;

private:
    WeightedNorms raw_norms(const Mat& A, const NormRegion& region) const;

    std::string id_;
    ScalarFn f_;
    std::function<Vec(CVecRef)> grad_;
    BatchObservable batch_;
    double scale_ = 1.0;
};

/// Sample points used for weighted norms (columns).
Mat norm_sample_points(int q, const NormRegion& region);

}  // namespace slowfast
