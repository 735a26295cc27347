#pragma once

#include "slowfast/model.hpp"
#include "slowfast/rng.hpp"

#include <iosfwd>

namespace slowfast {

/// Euler-Maruyama stepper for the frozen fast diffusion
///   dY = h(z, Y) dt + eta(z, Y) dB
/// acting on a q x N ensemble of fast states at once.
///
/// The micro-step of Y^n at frozen slow state z is a frozen step of size n * dt_fast,
/// so the same stepper serves the slow-fast simulator, the particle filter and the
/// ergodic estimators.
class FastStepper {
public:
    FastStepper(const ModelSpec& model, CVecRef z, double step);

    /// One step driven by standard normals `xi` (q x N).
    void step(MatRef ys, CMatRef xi);
    /// `count` steps with normals drawn column by column from `rng`.
    void advance(MatRef ys, std::size_t count, RngStream& rng);

    double step_size() const { return step_; }

private:
    const ModelSpec* model_;
    Vec z_;
    double step_;
    double sqrt_step_;
    BatchFn drift_;
    Mat eta_const_;
    Mat drift_buf_;
    Mat noise_buf_;
    Mat xi_buf_;
    Mat eta_buf_;
};

/// Simulate the slow-fast system with fresh increments from the cfg-keyed streams.
PathBundle simulate_slow_fast(const ModelSpec& model, const SimConfig& cfg);
/// Re-run with a stored increment set (coupling reuse).
PathBundle simulate_slow_fast(const ModelSpec& model, const SimConfig& cfg, const Increments& inc);

struct FrozenPath {
    Vec t;
    Mat Y;  ///< (K+1) x q
};

/// Frozen diffusion at slow parameter z with unit scale separation.
FrozenPath simulate_frozen(const ModelSpec& model, CVecRef z, CVecRef y_init, double horizon, double dt,
                           RngStream& rng);

/// x0 + sum pi_hat_b dt + sum sigma(X_k) dI_k on the slow grid of `path`.
/// `pi_hat_b` and `dI` are M x p.
Mat reconstruct_slow_from_innovations(const ModelSpec& model, const PathBundle& path, CMatRef pi_hat_b,
                                      CMatRef dI);

/// CSV with header t,X_1..X_p,Y_1..Y_q.
void write_path_csv(std::ostream& os, const PathBundle& path);
/// CSV with header k,dW_1..dW_p for the slow increments and j,dB_1..dB_q for the fast ones.
void write_increments_csv(std::ostream& slow, std::ostream& fast, const PathBundle& path);

}  // namespace slowfast
