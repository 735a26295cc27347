#pragma once

#include "slowfast/law.hpp"
#include "slowfast/model.hpp"
#include "slowfast/rng.hpp"
#include "slowfast/weighted.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace slowfast {

struct InvariantProvenance {
    Vec z;
    double burn_in = 0.0;
    double thinning = 0.0;
    double dt = 0.0;
    std::size_t chains = 0;
};

/// Sample approximation of the frozen invariant law at one slow state.
/// Samples are stored chain by chain in time order, one row per sample.
class EmpiricalMeasure final : public Law {
public:
    EmpiricalMeasure(Mat samples, Vec weights, InvariantProvenance provenance);

    int dim() const override { return static_cast<int>(samples_.cols()); }
    /// Weighted mean; the standard error uses batch means over ceil(sqrt(N)) batches.
    Estimate expect(const ScalarFn& f) const override;

    std::size_t size() const { return static_cast<std::size_t>(samples_.rows()); }
    const Mat& samples() const { return samples_; }
    const Vec& weights() const { return weights_; }
    const InvariantProvenance& provenance() const { return prov_; }

    /// CSV with header y_1..y_q,weight.
    void write_csv(std::ostream& os) const;

private:
    Mat samples_;
    Vec weights_;
    InvariantProvenance prov_;
};

struct InvariantConfig {
    std::size_t n_samples = 10000;
    /// Defaults 5 / delta1 and 1 / delta1; one of these or `delta1` must be given.
    std::optional<double> burn_in;
    std::optional<double> thinning;
    std::optional<double> delta1;
    double dt = 0.005;
    /// Independent chains advanced together; samples are split evenly between them.
    std::size_t chains = 50;
};

/// Long-run samples of the frozen diffusion at z. Throws ConfigError when fewer than
/// 100 samples are requested and DivergenceError when a chain leaves the finite reals.
EmpiricalMeasure estimate_invariant(const ModelSpec& model, CVecRef z, const InvariantConfig& cfg, RngStream rng);

/// Moves every sample of `mu` forward by `horizon` under the frozen dynamics at z.
EmpiricalMeasure advance_measure(const ModelSpec& model, CVecRef z, const EmpiricalMeasure& mu, double horizon,
                                 double dt, RngStream rng);

/// An invariant lookup backed by `estimate_invariant`; the stream index is derived from z.
InvariantLookup invariant_estimator(const ModelSpec& model, InvariantConfig cfg, std::uint64_t seed);

/// Monte Carlo H_t(z, y) = E[f(Y^z_t) | Y^z_0 = y] - pi^z[f] on a (y, t) grid.
struct HTable {
    std::string f_id;
    Vec z;
    Mat y_grid;  ///< one row per starting point
    Vec t_grid;
    Mat value;   ///< rows: y, columns: t
    Mat se;
    Estimate pi_f;
};

struct HConfig {
    std::size_t replicas = 4000;
    double dt = 0.005;
    bool antithetic = true;
};

/// t = 0 entries are f(y) - pi[f] without simulation. Times are rounded to multiples of dt.
HTable estimate_Hf(const ModelSpec& model, CVecRef z, const WeightedFn& f, const Law& invariant, CMatRef y_grid,
                   CVecRef t_grid, const HConfig& cfg, RngStream rng);

/// Log-linear envelope |H_t| ~ C exp(-xi t).
struct ErgodicityFit {
    std::string f_id;
    double C = 0.0;
    double xi = 0.0;
    double r2 = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    std::size_t points = 0;
};

/// Fits log|H| against t over the times where |H| > 3 SE (and above 1e-10).
/// Uses row `y_index` of the table, or the envelope max over rows when unset.
/// Throws FitError when fewer than three times qualify.
ErgodicityFit fit_ergodic_rate(const HTable& table, std::optional<std::size_t> y_index = std::nullopt);

/// {"f":..,"C":..,"xi":..,"r2":..,"t_lo":..,"t_hi":..,"points":..}
std::string ergodicity_fit_json(const ErgodicityFit& fit);

struct ContinuityProbe {
    /// Lower bound on the TV-Lipschitz ratio: max over the dictionary of |pi1 f - pi2 f| / |z1 - z2|.
    Estimate ratio;
    std::size_t argmax = 0;
    std::vector<double> per_function;
};

/// Dictionary members must satisfy sup |f| <= 1. Throws ConfigError when z1 == z2.
ContinuityProbe probe_invariant_continuity(const InvariantLookup& lookup, CVecRef z1, CVecRef z2,
                                           const std::vector<ScalarFn>& dictionary);

/// Bounded dictionary cos(k y_j), sin(k y_j), tanh(y_j) for k in {0.5, 1, 2}.
std::vector<ScalarFn> bounded_dictionary(int q);

}  // namespace slowfast
