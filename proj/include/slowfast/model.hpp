#pragma once

#include "slowfast/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace slowfast {

/// (x, y, out) -> out = drift(x, y).
using DriftFn = std::function<void(CVecRef x, CVecRef y, VecRef out)>;
/// (x, out) -> out = sigma(x), a p x p matrix.
using SlowDiffusionFn = std::function<void(CVecRef x, MatRef out)>;
/// (x, y, out) -> out = eta(x, y), a q x q matrix.
using FastDiffusionFn = std::function<void(CVecRef x, CVecRef y, MatRef out)>;
/// Batched evaluation at a frozen slow state: columns of `ys` are fast states.
using BatchFn = std::function<void(CMatRef ys, MatRef out)>;
/// Produces a batched evaluator with the slow argument fixed.
using FreezeFn = std::function<BatchFn(CVecRef x)>;

/// Coefficients of the slow-fast system
///   dX = b(X,Y) dt + sigma(X) dW,    dY = n h(X,Y) dt + sqrt(n) eta(X,Y) dB.
struct ModelSpec {
    std::string name;
    int p = 1;
    int q = 1;
    DriftFn b;
    SlowDiffusionFn sigma;
    DriftFn h;
    FastDiffusionFn eta;
    Vec x0;
    Vec y0;
    /// When false, eta is evaluated once per frozen slow state (with y = 0).
    bool eta_depends_on_y = true;
    /// Optional fast paths; fall back to column-wise loops over b and h.
    FreezeFn freeze_b;
    FreezeFn freeze_h;
    /// Largest admissible effective fast step n * dt_slow / substeps.
    std::optional<double> stability_cap;

    /// Throws ConfigError on missing callbacks or inconsistent dimensions.
    void validate() const;
};

/// h(z, .) evaluated column-wise on q x N fast states.
BatchFn frozen_fast_drift(const ModelSpec& model, CVecRef z);
/// b(x, .) evaluated column-wise; output is p x N.
BatchFn frozen_slow_drift(const ModelSpec& model, CVecRef x);

struct SimConfig {
    int n = 1;
    double T = 1.0;
    double dt_slow = 1e-3;
    int substeps = 1;
    std::uint64_t seed = 0;
    std::uint64_t replica_id = 0;

    std::size_t steps() const;
    double fast_step() const { return dt_slow / substeps; }
    /// Effective step of the fast chain in its own time units.
    double effective_fast_step() const { return n * dt_slow / substeps; }
    /// Checks positivity, grid divisibility and the model's stability cap.
    void validate(const ModelSpec& model) const;
};

/// Driving increments of one slow-fast trajectory.
struct Increments {
    Mat dW;  ///< M x p, slow Brownian increments
    Mat dB;  ///< (M * substeps) x q, fast Brownian increments per micro-step
};

/// A realized trajectory on the slow grid together with what drove it.
struct PathBundle {
    Vec grid;  ///< t_0 = 0, ..., t_M = T
    Mat X;     ///< (M+1) x p
    Mat Y;     ///< (M+1) x q
    Increments inc;
    std::optional<Mat> dI;  ///< M x p innovation increments, when a filter was run
    int n = 1;
    int substeps = 1;

    std::size_t steps() const { return static_cast<std::size_t>(grid.size()) - 1; }
    double dt() const { return grid.size() > 1 ? grid(1) - grid(0) : 0.0; }
};

}  // namespace slowfast
