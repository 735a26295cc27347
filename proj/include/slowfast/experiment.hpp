#pragma once

#include "slowfast/ergodics.hpp"
#include "slowfast/metrics.hpp"
#include "slowfast/models.hpp"
#include "slowfast/poisson.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace slowfast {

enum class ExperimentKind {
    Simulate,
    Invariant,
    FilterValidate,
    RatesStrong,
    RatesWeak,
    RhoStudy,
    PoissonCheck,
    CheckAssumptions,
};

std::string kind_name(ExperimentKind kind);
/// Throws ConfigError on an unknown name.
ExperimentKind parse_kind(const std::string& name);
const std::vector<std::string>& kind_names();

struct PoissonPoint {
    Vec z;
    Vec y;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Simulate;
    std::string model = "SINCOS";
    /// Library callers may supply their own model and oracle; `model` is then only a label.
    std::optional<BuiltinModel> inline_model;
    SimConfig sim;  ///< n is overridden by n_list where the study sweeps n
    std::vector<int> n_list;
    std::size_t replicas = 0;  ///< 0 selects the default of the study
    std::size_t particles = 2000;
    /// Fast dictionary ids from TestDictionary::defaults; empty keeps all of them.
    std::vector<std::string> dictionary;
    /// Slow test function ids for rates-weak; empty means cos(x1).
    std::vector<std::string> phi;
    double m = 1.5;
    Coupling coupling = Coupling::Innovation;
    bool common_noise = true;
    std::vector<Vec> z_points;
    double x_lo = -3.0;
    double x_hi = 3.0;
    std::size_t x_points = 61;
    InvariantConfig invariant;
    PoissonParams poisson;
    StencilSpec stencil;
    /// Fast function of the Poisson check: "y<j>" for a coordinate or a dictionary id.
    std::string poisson_f = "y1";
    std::vector<PoissonPoint> poisson_points;
    std::filesystem::path out = "runs";
    std::optional<std::uint64_t> seed;
    unsigned workers = 1;

    /// Seed present, n_list strictly increasing and positive, names resolvable.
    void validate() const;
    std::size_t replicas_or_default() const;
};

/// Parses a JSON config; unknown keys are rejected. Throws ConfigError.
ExperimentConfig config_from_json(const std::string& text);
/// Serialization that config_from_json reads back (inline models are not serialized).
std::string config_to_json(const ExperimentConfig& cfg);

/// Builtin or inline model of the config.
BuiltinModel resolve_model(const ExperimentConfig& cfg);

struct ExperimentResult {
    int status = 0;  ///< 0 success, 1 a check failed
    std::filesystem::path dir;
    std::vector<std::string> failures;
};

/// Runs the study into a fresh directory under cfg.out (never reusing an existing one) and writes
/// manifest.json next to the artifacts. Configuration errors throw before the directory is created.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

std::string version_string();

}  // namespace slowfast
