#pragma once

#include "slowfast/model.hpp"
#include "slowfast/rng.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace slowfast {

/// Weighted particle approximation of the conditional law of the fast state.
/// Particles are stored column-wise (q x N).
struct ParticleCloud {
    Mat particles;
    Vec weights;
    double t = 0.0;

    std::size_t size() const { return static_cast<std::size_t>(particles.cols()); }
    /// 1 / sum w_i^2
    double ess() const;
    Vec mean() const;
    Vec variance() const;
};

struct FilterConfig {
    std::size_t particles = 2000;
    /// Resample when ESS < threshold * N.
    double resample_threshold = 0.5;
    /// Keep every cloud in the trace (memory heavy).
    bool keep_clouds = false;
    /// Weighted means recorded at every grid time.
    std::vector<BatchObservable> observables;
};

struct InnovationPath {
    Mat dI;  ///< M x p
    /// Cumulative I, (M+1) x p, starting at zero.
    Mat cumulative() const;
    /// Per-coordinate sum of dI^2 over the path.
    Vec quadratic_variation() const;
};

struct FilterTrace {
    Vec t;         ///< M+1 grid times
    Vec ess;       ///< ESS after reweighting, before any resampling (N at t_0)
    Mat mean;      ///< (M+1) x q
    Mat var;       ///< (M+1) x q
    Mat pi_b;      ///< (M+1) x p, weighted mean of b(X_k, .) over the cloud at t_k
    Mat observed;  ///< (M+1) x F weighted means of the configured observables
    InnovationPath innovations;
    std::vector<ParticleCloud> clouds;
    std::size_t resamples = 0;
};

/// Bootstrap particle filter for the fast state given the slow path.
///
/// Per slow step: the filter drift and the innovation increment are taken from the current
/// cloud, particles are reweighted by the Euler likelihood of the slow increment, resampled
/// systematically when ESS drops below threshold * N, and propagated through `substeps`
/// micro-steps of the fast dynamics at the left-endpoint slow state.
///
/// Randomness comes from the FilterPropagate and FilterResample streams of `rng`'s seed
/// and replica.
FilterTrace run_particle_filter(const ModelSpec& model, const PathBundle& path, const FilterConfig& cfg,
                                const RngStream& rng);

/// Conditional mean and variance of the scalar linear-Gaussian filter.
struct KalmanState {
    double t = 0.0;
    double m = 0.0;
    double P = 0.0;
};

/// Kalman-Bucy filter integrated on the slow grid of `path`:
///   dm = n (a m + g(X)) dt + (P c / sigma^2)(dX - (c m + d(X)) dt),
///   dP/dt = 2 n a P + n eta^2 - P^2 c^2 / sigma^2,    m_0 = y0, P_0 = 0.
/// The Riccati equation is solved exactly over each step; throws ConfigError for
/// models that are not scalar linear-Gaussian.
std::vector<KalmanState> kalman_bucy_oracle(const ModelSpec& model, const PathBundle& path);

/// Weighted mean of f over the cloud with standard error sqrt(sum w_i^2 (f_i - mean)^2).
Estimate filter_expectation(const ParticleCloud& cloud, const ScalarFn& f);

/// CSV with header t,ESS,mean_1..mean_q,var_1..var_q,dI_1..dI_p (dI empty on the last row).
void write_filter_trace_csv(std::ostream& os, const FilterTrace& trace);

}  // namespace slowfast
