#pragma once

#include "slowfast/law.hpp"
#include "slowfast/model.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>

namespace slowfast {

/// Sampled region for assumption checks: z uniform in a box, y in a ball.
struct SampleSpec {
    double z_lo = -5.0;
    double z_hi = 5.0;
    /// Radius of the y-ball; unset means 10 * max(1, sqrt(delta0 / delta1)).
    std::optional<double> y_radius;
    std::size_t samples = 20000;
    std::uint64_t seed = 12345;
};

/// Sampled evidence for <h(z,y), A y> <= delta0 - delta1 <y, A y>.
struct StabilityCert {
    Mat A;
    double delta0 = 0.0;
    double delta1 = 0.0;
    bool valid = false;
    /// max over samples of <h,Ay> - delta0 + delta1 <y,Ay>; <= 0 when valid.
    double worst_margin = 0.0;
    Vec worst_z;
    Vec worst_y;
    double z_lo = 0.0, z_hi = 0.0, y_radius = 0.0;
    std::size_t samples = 0;
};

StabilityCert check_lyapunov(const ModelSpec& model, const Mat& A, double delta0, double delta1,
                             const SampleSpec& sample = {});

/// Declared constants a model is checked against; unset entries are reported only.
struct RegularityBounds {
    std::optional<double> b_sup;
    std::optional<double> eta_sup;
    std::optional<double> h_at_y0_sup;
    std::optional<double> lipschitz;
    std::optional<double> ellipticity;
};

struct RegularitySpec {
    SampleSpec region;
    Vec y_anchor;  ///< the y_0 of the bound on |h(z, y_0)|; zero when empty
    std::size_t pairs = 20000;
    RegularityBounds declared;
};

/// Per-quantity sampled constants. Matrix norms are spectral norms.
struct RegularityReport {
    double b_sup = 0.0;
    double b_sup_outer = 0.0;  ///< sup over a ball of 4x the radius
    bool bounded_b = false;
    double eta_sup = 0.0;
    double h_at_y0_sup = 0.0;
    double h_growth = 0.0;      ///< sup |h|^2 / (1 + |y|^2)
    double sigma_growth = 0.0;  ///< sup |sigma|^2 / (1 + |x|^2)
    double lip_b_x = 0.0, lip_b_y = 0.0;
    double lip_h_x = 0.0, lip_h_y = 0.0;
    double lip_sigma = 0.0;
    double lip_eta_x = 0.0, lip_eta_y = 0.0;
    double sigma_min_sv = 0.0;
    double eta_min_sv = 0.0;
    double ellipticity = 0.0;  ///< min(sigma_min_sv, eta_min_sv)^2
    bool pass = true;
    std::vector<std::string> failures;
};

RegularityReport check_regularity(const ModelSpec& model, const RegularitySpec& spec = {});

/// Coefficients of a scalar model with b = c y + d(x), h = a y + g(x), constant sigma and eta.
struct LinearGaussianParams {
    double c = 0.0;
    double a = 0.0;
    double sigma = 1.0;
    double eta = 1.0;
    std::function<double(double)> d;
    std::function<double(double)> g;
};

/// Extracts linear-Gaussian coefficients by probing; throws ConfigError for nonlinear models.
LinearGaussianParams linear_gaussian_params(const ModelSpec& model);

/// Closed-form facts shipped with a builtin model.
struct OracleBundle {
    /// Stationary law of the Euler chain of the frozen diffusion with step `h`;
    /// h = 0 gives the invariant law of the continuous frozen diffusion.
    std::function<GaussianLaw(CVecRef z, double h)> frozen_law;
    /// Averaged drift against `frozen_law(x, h)`, in closed form.
    std::function<Vec(CVecRef x, double h)> averaged_drift;
    std::optional<LinearGaussianParams> kalman;
};

struct BuiltinModel {
    ModelSpec spec;
    OracleBundle oracle;
    Mat A;
    double delta0 = 0.0;
    double delta1 = 0.0;
    bool bounded_b = false;
    RegularityBounds bounds;
    /// Drift constants for V_k, k = 1, 2: L V_k <= beta0[k-1] - beta1[k-1] V_k.
    std::array<double, 2> beta0{};
    std::array<double, 2> beta1{};

    /// Invariant lookup consistent with an Euler fast chain of step h.
    InvariantLookup invariant_lookup(double h = 0.0) const;
};

/// SINCOS, LINGAUSS or OU2D; throws ConfigError otherwise.
BuiltinModel builtin(const std::string& name);

/// Sampled sup of L^z V_k + beta1 V_k, i.e. the smallest beta0 compatible with beta1 on the sample.
double sampled_moment_drift(const ModelSpec& model, const Mat& A, int k, double beta1, const SampleSpec& sample);

}  // namespace slowfast
