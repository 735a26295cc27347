#include "slowfast/ergodics.hpp"

#include "slowfast/io.hpp"
#include "slowfast/sde.hpp"
#include "slowfast/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <ostream>

namespace slowfast {

EmpiricalMeasure::EmpiricalMeasure(Mat samples, Vec weights, InvariantProvenance provenance)
    : samples_(std::move(samples)), weights_(std::move(weights)), prov_(std::move(provenance)) {
    if (samples_.rows() == 0) throw ConfigError("empirical measure: no samples");
    if (weights_.size() != samples_.rows()) throw ConfigError("empirical measure: one weight per sample required");
    if ((weights_.array() < 0.0).any()) throw ConfigError("empirical measure: negative weight");
    const double s = weights_.sum();
    if (!(s > 0.0)) throw ConfigError("empirical measure: weights sum to zero");
    weights_ /= s;
}

Estimate EmpiricalMeasure::expect(const ScalarFn& f) const {
    const auto N = samples_.rows();
    std::vector<double> vals(static_cast<std::size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i) vals[static_cast<std::size_t>(i)] = f(samples_.row(i).transpose());
    const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    if (*lo == *hi) return {*lo, 0.0};
    for (Eigen::Index i = 0; i < N; ++i) vals[static_cast<std::size_t>(i)] *= static_cast<double>(N) * weights_(i);
    return batch_means(vals);
}

void EmpiricalMeasure::write_csv(std::ostream& os) const {
    for (Eigen::Index i = 0; i < samples_.cols(); ++i) os << "y_" << (i + 1) << ',';
    os << "weight\n";
    std::vector<double> row;
    for (Eigen::Index k = 0; k < samples_.rows(); ++k) {
        row.clear();
        for (Eigen::Index i = 0; i < samples_.cols(); ++i) row.push_back(samples_(k, i));
        row.push_back(weights_(k));
        os << csv_row(row);
    }
}

namespace {

std::size_t steps_for(double time, double dt) {
    return static_cast<std::size_t>(std::llround(time / dt));
}

}  // namespace

EmpiricalMeasure estimate_invariant(const ModelSpec& model, CVecRef z, const InvariantConfig& cfg, RngStream rng) {
    model.validate();
    if (z.size() != model.p) throw ConfigError("estimate_invariant: z has wrong dimension");
    if (cfg.n_samples < 100) throw ConfigError("estimate_invariant: at least 100 samples are required");
    if (cfg.chains < 1 || cfg.chains > cfg.n_samples) throw ConfigError("estimate_invariant: invalid chain count");
    if (!(cfg.dt > 0.0)) throw ConfigError("estimate_invariant: dt must be positive");
    if (model.stability_cap && cfg.dt > *model.stability_cap)
        throw ConfigError("estimate_invariant: dt exceeds the model stability cap");
    if ((!cfg.burn_in || !cfg.thinning) && !cfg.delta1)
        throw ConfigError("estimate_invariant: burn-in and thinning need either explicit values or delta1");
    const double burn = cfg.burn_in ? *cfg.burn_in : 5.0 / *cfg.delta1;
    const double thin = cfg.thinning ? *cfg.thinning : 1.0 / *cfg.delta1;
    if (burn < 0.0 || !(thin > 0.0)) throw ConfigError("estimate_invariant: invalid burn-in or thinning");

    const auto C = static_cast<Eigen::Index>(cfg.chains);
    const auto per_chain = static_cast<Eigen::Index>((cfg.n_samples + cfg.chains - 1) / cfg.chains);
    const std::size_t thin_steps = std::max<std::size_t>(1, steps_for(thin, cfg.dt));

    FastStepper stepper(model, z, cfg.dt);
    Mat Y = model.y0.replicate(1, C);
    stepper.advance(Y, steps_for(burn, cfg.dt), rng);
    if (!Y.allFinite()) throw DivergenceError("invariant chain diverged during burn-in", 0);

    std::vector<Mat> per(static_cast<std::size_t>(C), Mat(per_chain, model.q));
    for (Eigen::Index s = 0; s < per_chain; ++s) {
        stepper.advance(Y, thin_steps, rng);
        if (!Y.allFinite()) throw DivergenceError("invariant chain diverged", static_cast<std::size_t>(s + 1));
        for (Eigen::Index c = 0; c < C; ++c) per[static_cast<std::size_t>(c)].row(s) = Y.col(c).transpose();
    }
    const auto N = static_cast<Eigen::Index>(cfg.n_samples);
    Mat samples(N, model.q);
    Eigen::Index row = 0;
    for (Eigen::Index c = 0; c < C && row < N; ++c)
        for (Eigen::Index s = 0; s < per_chain && row < N; ++s) samples.row(row++) = per[static_cast<std::size_t>(c)].row(s);

    InvariantProvenance prov{z, burn, thin, cfg.dt, cfg.chains};
    return EmpiricalMeasure(std::move(samples), Vec::Constant(N, 1.0), std::move(prov));
}

EmpiricalMeasure advance_measure(const ModelSpec& model, CVecRef z, const EmpiricalMeasure& mu, double horizon,
                                 double dt, RngStream rng) {
    FastStepper stepper(model, z, dt);
    Mat Y = mu.samples().transpose();
    stepper.advance(Y, steps_for(horizon, dt), rng);
    if (!Y.allFinite()) throw DivergenceError("advanced measure diverged", 0);
    InvariantProvenance prov = mu.provenance();
    prov.burn_in += horizon;
    return EmpiricalMeasure(Y.transpose(), mu.weights(), std::move(prov));
}

InvariantLookup invariant_estimator(const ModelSpec& model, InvariantConfig cfg, std::uint64_t seed) {
    return [&model, cfg, seed](CVecRef z) -> std::shared_ptr<const Law> {
        std::uint64_t hsh = 0;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            std::uint64_t bits;
            const double v = z(i);
            std::memcpy(&bits, &v, sizeof bits);
            hsh = splitmix64(hsh ^ bits);
        }
        RngStream rng(seed, {hsh >> 32, Purpose::Frozen, static_cast<std::uint32_t>(hsh)});
        return std::make_shared<EmpiricalMeasure>(estimate_invariant(model, z, cfg, rng));
    };
}

HTable estimate_Hf(const ModelSpec& model, CVecRef z, const WeightedFn& f, const Law& invariant, CMatRef y_grid,
                   CVecRef t_grid, const HConfig& cfg, RngStream rng) {
    model.validate();
    if (y_grid.cols() != model.q) throw ConfigError("estimate_Hf: y grid has wrong dimension");
    if (cfg.replicas < 2) throw ConfigError("estimate_Hf: need at least two replicas");
    if (!(cfg.dt > 0.0)) throw ConfigError("estimate_Hf: dt must be positive");
    for (Eigen::Index j = 0; j < t_grid.size(); ++j) {
        if (t_grid(j) < 0.0) throw ConfigError("estimate_Hf: negative time");
        if (j > 0 && t_grid(j) < t_grid(j - 1)) throw ConfigError("estimate_Hf: time grid must be increasing");
    }

    HTable tab;
    tab.f_id = f.id();
    tab.z = z;
    tab.y_grid = y_grid;
    tab.t_grid = t_grid;
    tab.pi_f = invariant.expect(f.as_scalar());
    if (!std::isfinite(tab.pi_f.value)) throw ConfigError("estimate_Hf: invariant expectation unavailable");
    tab.value.resize(y_grid.rows(), t_grid.size());
    tab.se.resize(y_grid.rows(), t_grid.size());

    const auto pairs = static_cast<Eigen::Index>(cfg.antithetic ? (cfg.replicas + 1) / 2 : cfg.replicas);
    FastStepper stepper(model, z, cfg.dt);
    Mat yp, ym, xi(model.q, pairs);
    Vec fp(pairs), fm(pairs);
    std::vector<double> g(static_cast<std::size_t>(pairs));
    for (Eigen::Index r = 0; r < y_grid.rows(); ++r) {
        const Vec y = y_grid.row(r).transpose();
        yp = y.replicate(1, pairs);
        if (cfg.antithetic) ym = yp;
        std::size_t done = 0;
        for (Eigen::Index j = 0; j < t_grid.size(); ++j) {
            const std::size_t target = steps_for(t_grid(j), cfg.dt);
            if (target == 0) {
                tab.value(r, j) = f(y) - tab.pi_f.value;
                tab.se(r, j) = tab.pi_f.se;
                continue;
            }
            for (; done < target; ++done) {
                rng.fill_normal({xi.data(), static_cast<std::size_t>(xi.size())});
                stepper.step(yp, xi);
                if (cfg.antithetic) stepper.step(ym, -xi);
            }
            if (!yp.allFinite() || (cfg.antithetic && !ym.allFinite()))
                throw DivergenceError("estimate_Hf: frozen paths diverged", target);
            f.eval_batch(yp, fp);
            if (cfg.antithetic) f.eval_batch(ym, fm);
            for (Eigen::Index i = 0; i < pairs; ++i)
                g[static_cast<std::size_t>(i)] = cfg.antithetic ? 0.5 * (fp(i) + fm(i)) : fp(i);
            const Estimate e = mean_se(g);
            tab.value(r, j) = e.value - tab.pi_f.value;
            tab.se(r, j) = std::hypot(e.se, tab.pi_f.se);
        }
    }
    return tab;
}

ErgodicityFit fit_ergodic_rate(const HTable& table, std::optional<std::size_t> y_index) {
    if (y_index && *y_index >= static_cast<std::size_t>(table.value.rows()))
        throw ConfigError("fit_ergodic_rate: y index out of range");
    std::vector<double> ts, ls;
    for (Eigen::Index j = 0; j < table.t_grid.size(); ++j) {
        Eigen::Index r = 0;
        if (y_index) {
            r = static_cast<Eigen::Index>(*y_index);
        } else {
            table.value.col(j).cwiseAbs().maxCoeff(&r);
        }
        const double v = std::abs(table.value(r, j));
        if (v > 3.0 * table.se(r, j) && v > 1e-10) {
            ts.push_back(table.t_grid(j));
            ls.push_back(std::log(v));
        }
    }
    if (ts.size() < 3)
        throw FitError("fit_ergodic_rate: fewer than three times rise above the noise floor for '" + table.f_id + "'");
    const auto n = static_cast<double>(ts.size());
    double mt = 0, ml = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        mt += ts[i] / n;
        ml += ls[i] / n;
    }
    double stt = 0, stl = 0, sll = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        stt += (ts[i] - mt) * (ts[i] - mt);
        stl += (ts[i] - mt) * (ls[i] - ml);
        sll += (ls[i] - ml) * (ls[i] - ml);
    }
    if (stt == 0.0) throw FitError("fit_ergodic_rate: qualifying times are not distinct");
    const double slope = stl / stt;
    ErgodicityFit fit;
    fit.f_id = table.f_id;
    fit.xi = -slope;
    fit.C = std::exp(ml - slope * mt);
    fit.r2 = sll > 0.0 ? stl * stl / (stt * sll) : 1.0;
    fit.t_lo = ts.front();
    fit.t_hi = ts.back();
    fit.points = ts.size();
    return fit;
}

std::string ergodicity_fit_json(const ErgodicityFit& fit) {
    nlohmann::ordered_json j;
    j["f"] = fit.f_id;
    j["C"] = fit.C;
    j["xi"] = fit.xi;
    j["r2"] = fit.r2;
    j["t_lo"] = fit.t_lo;
    j["t_hi"] = fit.t_hi;
    j["points"] = fit.points;
    return j.dump(2);
}

ContinuityProbe probe_invariant_continuity(const InvariantLookup& lookup, CVecRef z1, CVecRef z2,
                                           const std::vector<ScalarFn>& dictionary) {
    const double dz = (z1 - z2).norm();
    if (!(dz > 0.0)) throw ConfigError("probe_invariant_continuity: z1 and z2 must differ");
    if (dictionary.empty()) throw ConfigError("probe_invariant_continuity: empty dictionary");
    const auto l1 = lookup(z1);
    const auto l2 = lookup(z2);
    ContinuityProbe out;
    double best = -1.0;
    for (std::size_t i = 0; i < dictionary.size(); ++i) {
        const Estimate a = l1->expect(dictionary[i]);
        const Estimate b = l2->expect(dictionary[i]);
        const double r = std::abs(a.value - b.value) / dz;
        out.per_function.push_back(r);
        if (r > best) {
            best = r;
            out.argmax = i;
            out.ratio = {r, std::hypot(a.se, b.se) / dz};
        }
    }
    return out;
}

std::vector<ScalarFn> bounded_dictionary(int q) {
    std::vector<ScalarFn> out;
    for (int j = 0; j < q; ++j) {
        for (double k : {0.5, 1.0, 2.0}) {
            out.emplace_back([j, k](CVecRef y) { return std::cos(k * y(j)); });
            out.emplace_back([j, k](CVecRef y) { return std::sin(k * y(j)); });
        }
        out.emplace_back([j](CVecRef y) { return std::tanh(y(j)); });
    }
    return out;
}

}  // namespace slowfast
