#pragma once

#include "slowfast/averaging.hpp"
#include "slowfast/filter.hpp"
#include "slowfast/generator.hpp"
#include "slowfast/law.hpp"
#include "slowfast/weighted.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace slowfast {

struct BuiltinModel;

/// A slow-space test function with derivatives.
struct SlowTestFn {
    std::string id;
    TwiceDiff fn;
};

struct TestDictionary {
    std::vector<WeightedFn> fast;  ///< normalized into the unit class
    std::vector<SlowTestFn> slow;

    /// Fast: sin(k y_j), cos(k y_j) for k in {0.5, 1, 2} and y_j / (1 + V(y)), each normalized against A.
    /// Slow: cos(x_1), 1 / (1 + |x|^2), prod tanh(x_i).
    static TestDictionary defaults(int p, int q, const Mat& A, const NormRegion& region = {});

    std::vector<BatchObservable> fast_observables() const;
};

struct RhoEstimate {
    /// Dictionary lower bound of rho: max over f of |int (pi_hat_t f - pi^{X_t} f) dt| (trapezoid).
    double value = 0.0;
    std::size_t argmax = 0;
    std::vector<double> per_function;
};

/// Uses the trace's recorded observables, which must be `dict.fast` in order.
RhoEstimate estimate_rho(const FilterTrace& trace, const InvariantLookup& lookup, CMatRef X,
                         const TestDictionary& dict);

/// Same from stored clouds; cloud k sits at X row k.
RhoEstimate estimate_rho(const std::vector<ParticleCloud>& clouds, const InvariantLookup& lookup, CMatRef X,
                         const TestDictionary& dict);

/// |int_0^T <X - X*, Delta_t> dt| with Delta_t = pi_hat_t[b(X_t, .)] - pi^{X_t}[b(X_t, .)], trapezoid rule.
/// X* is the averaged path driven by the trace's innovations.
double drift_discrepancy_diag(const ModelSpec& model, const AveragedDrift& avg, const PathBundle& path,
                              const FilterTrace& trace, const InvariantLookup& lookup);

struct RatePoint {
    double n = 0.0;
    double error = 0.0;
    double se = 0.0;
    bool used = true;
};

struct RateFit {
    std::vector<RatePoint> points;
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double ci_lo = 0.0;  ///< 95% interval on the slope
    double ci_hi = 0.0;
    std::size_t points_used = 0;
    std::vector<double> residuals;  ///< log-scale residuals of the used points
};

/// Weighted least squares of log error on log n over the used points, with weights from the
/// relative standard errors (unweighted when every SE is zero). Throws FitError with fewer
/// than four used points or a nonpositive error among them.
RateFit fit_rate(const std::vector<RatePoint>& points);

/// CSV with header n,error,stderr (all points).
void write_rate_csv(std::ostream& os, const RateFit& fit);
/// Flat JSON {slope, intercept, slope_se, ci_lo, ci_hi, points_used, excluded_n}.
std::string rate_fit_json(const RateFit& fit);

/// Produces the averaged drift and invariant lookup matched to a simulation configuration.
struct AveragingOracle {
    std::function<AveragedDrift(const SimConfig&)> drift;
    std::function<InvariantLookup(const SimConfig&)> invariant;
};

/// Closed-form oracle of a builtin model, consistent with the Euler fast chain of each configuration.
AveragingOracle step_consistent_oracle(const BuiltinModel& model);

enum class Coupling { Innovation, CommonW };

struct StrongConfig {
    SimConfig base;  ///< n is taken from n_list
    std::vector<int> n_list;
    std::size_t replicas = 400;
    FilterConfig filter;
    double m = 1.5;
    Coupling coupling = Coupling::Innovation;
    /// Also evaluate the common-W coupling on the same runs.
    bool compare_common_w = true;
    /// Record the dictionary rho and the drift diagnostic from the same runs.
    std::optional<TestDictionary> dictionary;
    unsigned workers = 1;
};

struct StrongPoint {
    int n = 0;
    Estimate sup_mean_sq;   ///< sup_t E|X - X*|^2 (SE at the maximizing t)
    Estimate mean_sup_sq;   ///< E sup_t |X - X*|^2
    Estimate mean_sup_m;    ///< E sup_t |X - X*|^m
    Estimate common_w;      ///< sup_t E|X - X_bar|^2 with X_bar driven by the slow dW
    Estimate rho;
    Estimate rho_z;         ///< E[Z rho] with Z = sup_t |X - X*|
    Estimate drift_diag;
    Vec mean_sq_t;          ///< E|X_t - X*_t|^2 on the grid
};

struct StrongResult {
    std::vector<StrongPoint> points;
    /// Unset when a fit is impossible (e.g. errors that vanish identically).
    std::optional<RateFit> fit_sq;
    std::optional<RateFit> fit_m;
    std::optional<RateFit> fit_common_w;
    std::optional<RateFit> fit_rho;
    std::optional<RateFit> fit_rho_z;
    std::optional<RateFit> fit_diag;
};

/// Per n and replica: simulate, filter, drive X* with the chosen coupling and record the errors.
/// Filter degeneracy is rethrown with the (n, replica) label.
StrongResult strong_error(const ModelSpec& model, const AveragingOracle& oracle, const StrongConfig& cfg);

struct WeakConfig {
    SimConfig base;
    std::vector<int> n_list;
    std::size_t replicas = 100000;
    /// Pair every X^n path with the averaged path driven by the same slow noise (same law as X*);
    /// when false X* uses an independent stream.
    bool common_noise = true;
    unsigned workers = 1;
};

struct WeakPoint {
    int n = 0;
    Estimate error;  ///< E phi(X^n_T) - E phi(X*_T)
    Estimate slow;   ///< E phi(X^n_T)
    Estimate averaged;
    bool used = false;  ///< |error| > 3 SE
};

struct WeakResult {
    std::string phi_id;
    std::vector<WeakPoint> points;
    std::optional<RateFit> fit;
    std::string fit_note;
};

std::vector<WeakResult> weak_error(const ModelSpec& model, const AveragingOracle& oracle,
                                   const std::vector<SlowTestFn>& phis, const WeakConfig& cfg);

struct WeakVerdict {
    std::string branch;  ///< "fit" or "no-fit"
    bool pass = false;
    std::string detail;
};

/// With a fit: slope in [lo, hi]. Without one: |error| at n_large lies below |error| at n_small
/// and their 3-SE intervals are disjoint.
WeakVerdict weak_rate_verdict(const WeakResult& w, double lo = -1.4, double hi = -0.6, int n_small = 16,
                              int n_large = 256);

}  // namespace slowfast
