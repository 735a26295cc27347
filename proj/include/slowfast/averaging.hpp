#pragma once

#include "slowfast/ergodics.hpp"
#include "slowfast/model.hpp"

#include <iosfwd>
#include <memory>
#include <vector>

namespace slowfast {

/// The averaged drift b_bar(x) = integral of b(x, y) against the frozen invariant law at x,
/// either in closed form or tabulated on a grid (p = 1) with piecewise-linear interpolation
/// and constant extrapolation.
class AveragedDrift {
public:
    static AveragedDrift oracle(std::function<Vec(CVecRef)> fn);
    static AveragedDrift tabulated(Vec x_grid, Vec values, Vec se, double lipschitz, double interpolation_error,
                                   std::vector<std::shared_ptr<const EmpiricalMeasure>> cache = {});

    Vec operator()(CVecRef x) const;

    bool is_tabulated() const { return !fn_; }
    const Vec& grid() const { return grid_; }
    const Vec& values() const { return values_; }
    const Vec& stderrs() const { return se_; }
    double lipschitz_estimate() const { return lipschitz_; }
    /// Grid spacing times the estimated Lipschitz constant.
    double interpolation_error_bound() const { return interp_error_; }
    const std::vector<std::shared_ptr<const EmpiricalMeasure>>& measures() const { return cache_; }

    /// CSV with header x,bbar,stderr; tabulated mode only.
    void write_csv(std::ostream& os) const;

private:
    std::function<Vec(CVecRef)> fn_;
    Vec grid_, values_, se_;
    double lipschitz_ = 0.0;
    double interp_error_ = 0.0;
    std::vector<std::shared_ptr<const EmpiricalMeasure>> cache_;
};

struct AveragingBudget {
    InvariantConfig invariant;
    /// Largest accepted interpolation error bound.
    double tolerance = 0.1;
    unsigned workers = 1;
};

/// Tabulates b_bar on an increasing grid (p = 1), one invariant estimate per node.
/// Throws ConfigError when the interpolation error bound exceeds the tolerance.
AveragedDrift build_averaged_drift(const ModelSpec& model, CVecRef x_grid, const AveragingBudget& budget,
                                   std::uint64_t seed);

struct LipschitzProbe {
    double estimate = 0.0;  ///< max adjacent difference quotient
    double lower = 0.0;     ///< with 3 SE removed from each difference
    double upper = 0.0;     ///< with 3 SE added
};

/// Throws ConfigError unless the drift is tabulated with at least three nodes.
LipschitzProbe lipschitz_probe_bbar(const AveragedDrift& avg);

/// X^{*,n}: Euler path of dX = b_bar(X) dt + sigma(X) dI on the grid of `source`, driven by its
/// innovation increments. Throws ConfigError when the path carries none.
Mat simulate_averaged(const ModelSpec& model, const AveragedDrift& avg, const PathBundle& source);

/// Euler path on `grid` driven by explicit increments (M x p), e.g. dI or the slow dW.
Mat simulate_averaged(const ModelSpec& model, const AveragedDrift& avg, CVecRef grid, CMatRef increments);

/// X^*: Euler path with fresh noise from the Averaged stream of (cfg.seed, cfg.replica_id).
Mat simulate_averaged(const ModelSpec& model, const AveragedDrift& avg, const SimConfig& cfg);

}  // namespace slowfast
