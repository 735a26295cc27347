#pragma once

#include "slowfast/types.hpp"

#include <functional>
#include <memory>

namespace slowfast {

/// A probability law on R^q that can integrate test functions.
class Law {
public:
    virtual ~Law() = default;
    virtual int dim() const = 0;
    /// Integral of f, with a standard error (zero for exact laws).
    virtual Estimate expect(const ScalarFn& f) const = 0;
};

/// Maps a slow state z to (an approximation of) the frozen invariant law at z.
using InvariantLookup = std::function<std::shared_ptr<const Law>(CVecRef z)>;

/// Gauss-Hermite nodes and weights for the weight exp(-x^2), via Golub-Welsch.
struct HermiteRule {
    Vec nodes;
    Vec weights;
};
const HermiteRule& hermite_rule(int order);

/// Multivariate normal integrated by tensor Gauss-Hermite quadrature.
class GaussianLaw final : public Law {
public:
    GaussianLaw(Vec mean, Mat cov, int order = 48);
    int dim() const override { return static_cast<int>(mean_.size()); }
    Estimate expect(const ScalarFn& f) const override;

    const Vec& mean() const { return mean_; }
    const Mat& cov() const { return cov_; }

private:
    Vec mean_;
    Mat cov_;
    Mat factor_;
    int order_;
};

}  // namespace slowfast
