#pragma once

#include "slowfast/generator.hpp"
#include "slowfast/law.hpp"
#include "slowfast/model.hpp"
#include "slowfast/rng.hpp"
#include "slowfast/weighted.hpp"

#include <string>
#include <vector>

namespace slowfast {

/// Smoothing and discount of the perturbed Poisson equation
///   eps Lap_z V + L^z V - lambda V = f - pi^z[f],
/// with the Monte Carlo budget of its randomized representation.
struct PoissonParams {
    double epsilon = 0.01;
    double lambda = 0.1;
    std::size_t outer = 4000;  ///< (t, z_bar) samples
    std::size_t inner = 32;    ///< frozen paths per outer sample (antithetic pairs)
    double dt = 0.01;          ///< Euler step of the frozen paths
    unsigned workers = 1;

    void validate() const;
    /// K(eps, lambda) = C lambda max{1/(lambda+xi), (1-e^-lambda)/lambda + e^-(lambda+xi)/(lambda+xi)}
    ///                + C eps (1/sqrt(eps) + e^-(lambda+xi) / (sqrt(eps)(lambda+xi))).
    double contraction_factor(double C, double xi) const;
    bool contracts(double C, double xi) const { return contraction_factor(C, xi) < 1.0; }
};

/// One estimate of V_f(z, y) = -int_0^inf e^{-lambda t} E[H_t(z_bar, y)] dt with z_bar ~ N(z, 2 eps t I):
/// t ~ Exp(lambda), z_bar drawn, H estimated from `inner` antithetic frozen paths, averaged as -H / lambda.
/// `rng` should be a Poisson-purpose stream; outer sample i uses its substream i.
/// Throws BudgetError when `max_se` is set and the standard error exceeds it.
Estimate estimate_Vf(const ModelSpec& model, const WeightedFn& f, CVecRef z, CVecRef y, const PoissonParams& params,
                     const InvariantLookup& lookup, const RngStream& rng, std::optional<double> max_se = std::nullopt);

/// Per-outer-sample values of -H / lambda at several (z_j, y_j) with common random numbers:
/// the same t, the same standard normal behind z_bar - z_j and the same path noise for every point.
/// Returns outer x points.
Mat estimate_Vf_crn(const ModelSpec& model, const WeightedFn& f, const std::vector<Vec>& zs,
                    const std::vector<Vec>& ys, const PoissonParams& params, const InvariantLookup& lookup,
                    const RngStream& rng);

struct StencilSpec {
    double z_step = 0.1;
    double y_step = 0.1;
    /// The check is inconclusive when the centre estimate's standard error exceeds this.
    double max_point_se = 0.1;
};

struct ResidualReport {
    Vec z;
    Vec y;
    double epsilon = 0.0;
    double lambda = 0.0;
    double residual = 0.0;
    double uncertainty = 0.0;
    Estimate v_centre;
    std::string verdict;  ///< "pass", "fail" or "inconclusive"
};

/// Residual of the perturbed Poisson equation for a deterministic V evaluator, by central differences.
/// The uncertainty is the rounding floor of the difference quotients.
ResidualReport check_poisson_residual(const ModelSpec& model, const WeightedFn& f, CVecRef z, CVecRef y,
                                      const PoissonParams& params, const Law& pi_z,
                                      const std::function<double(CVecRef, CVecRef)>& V,
                                      const StencilSpec& stencil = {});

/// Residual for the Monte Carlo estimator: the stencil is estimated with common random numbers and
/// the uncertainty is the standard error of the per-sample residuals. Pass iff |residual| <= 3 uncertainty.
ResidualReport check_poisson_residual(const ModelSpec& model, const WeightedFn& f, CVecRef z, CVecRef y,
                                      const PoissonParams& params, const InvariantLookup& lookup,
                                      const RngStream& rng, const StencilSpec& stencil = {});

/// {"z":[..],"y":[..],"epsilon":..,"lambda":..,"residual":..,"uncertainty":..,"verdict":".."}
std::string residual_report_json(const ResidualReport& report);

}  // namespace slowfast
