#include "slowfast/averaging.hpp"

#include "slowfast/io.hpp"
#include "slowfast/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace slowfast {

AveragedDrift AveragedDrift::oracle(std::function<Vec(CVecRef)> fn) {
    if (!fn) throw ConfigError("averaged drift: empty oracle");
    AveragedDrift out;
    out.fn_ = std::move(fn);
    return out;
}

AveragedDrift AveragedDrift::tabulated(Vec x_grid, Vec values, Vec se, double lipschitz, double interpolation_error,
                                       std::vector<std::shared_ptr<const EmpiricalMeasure>> cache) {
    if (x_grid.size() < 1 || values.size() != x_grid.size() || se.size() != x_grid.size())
        throw ConfigError("averaged drift: grid, values and errors must have equal nonzero length");
    for (Eigen::Index i = 1; i < x_grid.size(); ++i)
        if (!(x_grid(i) > x_grid(i - 1))) throw ConfigError("averaged drift: grid must be strictly increasing");
    AveragedDrift out;
    out.grid_ = std::move(x_grid);
    out.values_ = std::move(values);
    out.se_ = std::move(se);
    out.lipschitz_ = lipschitz;
    out.interp_error_ = interpolation_error;
    out.cache_ = std::move(cache);
    return out;
}

Vec AveragedDrift::operator()(CVecRef x) const {
    if (fn_) return fn_(x);
    const double v = x(0);
    const auto n = grid_.size();
    Vec out(1);
    if (n == 1 || v <= grid_(0)) {
        out(0) = values_(0);
    } else if (v >= grid_(n - 1)) {
        out(0) = values_(n - 1);
    } else {
        const auto it = std::upper_bound(grid_.data(), grid_.data() + n, v);
        const auto i = static_cast<Eigen::Index>(it - grid_.data()) - 1;
        const double w = (v - grid_(i)) / (grid_(i + 1) - grid_(i));
        out(0) = (1.0 - w) * values_(i) + w * values_(i + 1);
    }
    return out;
}

void AveragedDrift::write_csv(std::ostream& os) const {
    if (fn_) throw ConfigError("averaged drift: only tabulated drifts export to CSV");
    os << "x,bbar,stderr\n";
    for (Eigen::Index i = 0; i < grid_.size(); ++i) os << csv_row({grid_(i), values_(i), se_(i)});
}

AveragedDrift build_averaged_drift(const ModelSpec& model, CVecRef x_grid, const AveragingBudget& budget,
                                   std::uint64_t seed) {
    model.validate();
    if (model.p != 1) throw ConfigError("build_averaged_drift: tabulation is implemented for p = 1 only");
    const auto n = x_grid.size();
    if (n < 1) throw ConfigError("build_averaged_drift: empty grid");
    for (Eigen::Index i = 1; i < n; ++i)
        if (!(x_grid(i) > x_grid(i - 1))) throw ConfigError("build_averaged_drift: grid must be strictly increasing");

    std::vector<std::shared_ptr<const EmpiricalMeasure>> cache(static_cast<std::size_t>(n));
    Vec values(n), se(n);
    parallel_for(static_cast<std::size_t>(n), budget.workers, [&](std::size_t i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const Vec x = x_grid.segment(ii, 1);
        RngStream rng(seed, {i, Purpose::Frozen, 0});
        auto mu = std::make_shared<const EmpiricalMeasure>(estimate_invariant(model, x, budget.invariant, rng));
        const Estimate e = mu->expect([&model, &x](CVecRef y) {
            Vec out(1);
            model.b(x, y, out);
            return out(0);
        });
        values(ii) = e.value;
        se(ii) = e.se;
        cache[i] = std::move(mu);
    });

    double lip = 0.0, spacing = 0.0;
    for (Eigen::Index i = 1; i < n; ++i) {
        const double h = x_grid(i) - x_grid(i - 1);
        spacing = std::max(spacing, h);
        lip = std::max(lip, std::abs(values(i) - values(i - 1)) / h);
    }
    const double bound = spacing * lip;
    if (bound > budget.tolerance)
        throw ConfigError("build_averaged_drift: grid too coarse, interpolation error bound " + format_double(bound) +
                          " (spacing " + format_double(spacing) + " x Lipschitz " + format_double(lip) +
                          ") exceeds tolerance " + format_double(budget.tolerance));
    return AveragedDrift::tabulated(x_grid, std::move(values), std::move(se), lip, bound, std::move(cache));
}

LipschitzProbe lipschitz_probe_bbar(const AveragedDrift& avg) {
    if (!avg.is_tabulated() || avg.grid().size() < 3)
        throw ConfigError("lipschitz_probe_bbar: needs a tabulated drift with at least three nodes");
    const Vec& x = avg.grid();
    const Vec& v = avg.values();
    const Vec& s = avg.stderrs();
    LipschitzProbe out;
    for (Eigen::Index i = 1; i < x.size(); ++i) {
        const double h = x(i) - x(i - 1);
        const double d = std::abs(v(i) - v(i - 1));
        const double band = 3.0 * std::hypot(s(i), s(i - 1));
        out.estimate = std::max(out.estimate, d / h);
        out.lower = std::max(out.lower, std::max(d - band, 0.0) / h);
        out.upper = std::max(out.upper, (d + band) / h);
    }
    return out;
}

Mat simulate_averaged(const ModelSpec& model, const AveragedDrift& avg, CVecRef grid, CMatRef increments) {
    model.validate();
    const auto M = grid.size() - 1;
    if (M < 1 || increments.rows() != M || increments.cols() != model.p)
        throw ConfigError("simulate_averaged: increments do not match the grid");
    Mat X(M + 1, model.p);
    Vec x = model.x0;
    Mat sig(model.p, model.p);
    X.row(0) = x.transpose();
    for (Eigen::Index k = 0; k < M; ++k) {
        const double dt = grid(k + 1) - grid(k);
        model.sigma(x, sig);
        x += avg(x) * dt + sig * increments.row(k).transpose();
        X.row(k + 1) = x.transpose();
        if (!x.allFinite()) throw DivergenceError("averaged path diverged", static_cast<std::size_t>(k + 1));
    }
    return X;
}

Mat simulate_averaged(const ModelSpec& model, const AveragedDrift& avg, const PathBundle& source) {
    if (!source.dI) throw ConfigError("simulate_averaged: source path carries no innovation increments");
    return simulate_averaged(model, avg, source.grid, *source.dI);
}

Mat simulate_averaged(const ModelSpec& model, const AveragedDrift& avg, const SimConfig& cfg) {
    model.validate();
    const auto M = static_cast<Eigen::Index>(cfg.steps());
    if (!(cfg.dt_slow > 0.0)) throw ConfigError("simulate_averaged: dt must be positive");
    Vec grid(M + 1);
    for (Eigen::Index k = 0; k <= M; ++k) grid(k) = static_cast<double>(k) * cfg.dt_slow;
    Mat inc(M, model.p);
    RngStream rng(cfg.seed, {cfg.replica_id, Purpose::Averaged, 0});
    const double s = std::sqrt(cfg.dt_slow);
    for (Eigen::Index k = 0; k < M; ++k)
        for (Eigen::Index i = 0; i < model.p; ++i) inc(k, i) = s * rng.normal();
    return simulate_averaged(model, avg, grid, inc);
}

}  // namespace slowfast
