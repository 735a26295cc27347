// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as arguments to run a subset.

#include "slowfast/averaging.hpp"
#include "slowfast/ergodics.hpp"
#include "slowfast/experiment.hpp"
#include "slowfast/filter.hpp"
#include "slowfast/metrics.hpp"
#include "slowfast/models.hpp"
#include "slowfast/parallel.hpp"
#include "slowfast/poisson.hpp"
#include "slowfast/sde.hpp"
#include "slowfast/stats.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <unistd.h>

using namespace slowfast;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20240611;

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::cout << "criterion " << id << " (" << name << "): " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
    failures += !pass;
}

void info(const std::string& text) { std::cout << "    " << text << std::endl; }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

std::string fit_text(const std::optional<RateFit>& f) {
    if (!f) return "no fit";
    return "slope " + fmt(f->slope) + " [" + fmt(f->ci_lo) + ", " + fmt(f->ci_hi) + "]";
}

bool in_range(const std::optional<RateFit>& f, double lo, double hi) {
    return f && f->slope >= lo && f->slope <= hi;
}

SimConfig sim(int n, double T, double dt, int substeps, std::uint64_t seed = kSeed) {
    SimConfig c;
    c.n = n;
    c.T = T;
    c.dt_slow = dt;
    c.substeps = substeps;
    c.seed = seed;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// 1, 2, 4: one SINCOS sweep with the dictionary attached.
void strong_sweep() {
    const BuiltinModel bm = builtin("SINCOS");
    StrongConfig sc;
    sc.base = sim(1, 1.0, 2e-3, 8);
    sc.n_list = {4, 8, 16, 32, 64, 128, 256};
    sc.replicas = 400;
    sc.filter.particles = 2000;
    sc.m = 1.5;
    sc.dictionary = TestDictionary::defaults(1, 1, bm.A);
    sc.workers = 0;
    const StrongResult r = strong_error(bm.spec, step_consistent_oracle(bm), sc);
    for (const auto& p : r.points)
        info("n=" + std::to_string(p.n) + " sup E|X-X*|^2=" + fmt(p.sup_mean_sq.value) + "+-" + fmt(p.sup_mean_sq.se) +
             " E sup^1.5=" + fmt(p.mean_sup_m.value) + " commonW=" + fmt(p.common_w.value) +
             " rho=" + fmt(p.rho.value) + "+-" + fmt(p.rho.se) + " diag=" + fmt(p.drift_diag.value));
    info("common-W coupling " + fit_text(r.fit_common_w) + "; Z-weighted rho " + fit_text(r.fit_rho_z) +
         "; drift diagnostic " + fit_text(r.fit_diag));
    report(1, "strong rate", in_range(r.fit_sq, -1.25, -0.75), fit_text(r.fit_sq) + ", required [-1.25, -0.75]");
    report(2, "sup-moment rate", in_range(r.fit_m, -1.05, -0.45), fit_text(r.fit_m) + ", required [-1.05, -0.45]");
    report(4, "filter-to-invariant rate", in_range(r.fit_rho, -1.3, -0.7),
           fit_text(r.fit_rho) + ", required [-1.3, -0.7]");
}

void weak_rate() {
    const BuiltinModel bm = builtin("SINCOS");
    WeakConfig wc;
    wc.base = sim(1, 1.0, 2e-3, 8);
    wc.n_list = {4, 8, 16, 32, 64, 128, 256};
    wc.replicas = 100000;
    wc.workers = 0;
    const TestDictionary dict = TestDictionary::defaults(1, 1, bm.A);
    const auto res = weak_error(bm.spec, step_consistent_oracle(bm), {dict.slow.front()}, wc);
    const WeakResult& w = res.front();
    for (const auto& p : w.points)
        info("n=" + std::to_string(p.n) + " error=" + fmt(p.error.value) + "+-" + fmt(p.error.se) +
             (p.used ? "" : " (below 3 SE)"));
    const WeakVerdict v = weak_rate_verdict(w);
    report(3, "weak rate, " + w.phi_id, v.pass, v.branch + " branch: " + v.detail);
}

void kalman() {
    const BuiltinModel bm = builtin("LINGAUSS");
    const int n = 16;
    SimConfig c = sim(n, 1.0, 1e-3, 4);
    const PathBundle p = simulate_slow_fast(bm.spec, c);
    FilterConfig fc;
    fc.particles = 10000;
    const FilterTrace tr = run_particle_filter(bm.spec, p, fc, RngStream(kSeed, {0, Purpose::FilterPropagate, 0}));
    const auto kf = kalman_bucy_oracle(bm.spec, p);
    double s = 0.0;
    for (std::size_t k = 0; k < kf.size(); ++k) s += std::pow(tr.mean(static_cast<Eigen::Index>(k), 0) - kf[k].m, 2);
    const double rmse = std::sqrt(s / static_cast<double>(kf.size()));
    const auto M = tr.var.rows();
    const double late = tr.var.col(0).tail(M / 5).mean();
    const double target = std::sqrt(double(n) * n + n) - n;
    const double rel = std::abs(late - target) / target;
    report(5, "Kalman-Bucy agreement", rmse < 0.05 && rel <= 0.1,
           "RMSE " + fmt(rmse) + " (< 0.05), late variance " + fmt(late) + " vs " + fmt(target) + ", rel " + fmt(rel) +
               " (<= 0.1)");
}

void invariant() {
    const BuiltinModel bm = builtin("SINCOS");
    bool ok = true;
    std::string detail;
    std::uint64_t idx = 0;
    for (double z : {0.0, 1.0, std::numbers::pi / 2}) {
        InvariantConfig ic;
        ic.delta1 = bm.delta1;
        const EmpiricalMeasure mu =
            estimate_invariant(bm.spec, Vec::Constant(1, z), ic, RngStream(kSeed, {idx++, Purpose::Frozen, 0}));
        const double m0 = std::sin(z);
        const Estimate m = mu.expect([](CVecRef y) { return y(0); });
        const Estimate v = mu.expect([m0](CVecRef y) { return (y(0) - m0) * (y(0) - m0); });
        const bool pass = std::abs(m.value - m0) <= 3.0 * m.se && std::abs(v.value - 0.5) <= 3.0 * v.se;
        ok = ok && pass;
        detail += "z=" + fmt(z) + ": mean " + fmt(m.value) + "+-" + fmt(m.se) + ", var " + fmt(v.value) + "+-" +
                  fmt(v.se) + "; ";
    }
    report(6, "invariant oracles", ok, detail);
}

void averaged_drift() {
    const BuiltinModel bm = builtin("SINCOS");
    AveragingBudget b;
    b.invariant.delta1 = bm.delta1;
    b.workers = 0;
    const Vec grid = Vec::LinSpaced(41, -std::numbers::pi, std::numbers::pi);
    const AveragedDrift avg = build_averaged_drift(bm.spec, grid, b, kSeed);
    int bad = 0;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        const double ref = std::exp(-0.25) * std::cos(std::sin(grid(i)));
        const double z = std::abs(avg.values()(i) - ref) / avg.stderrs()(i);
        worst = std::max(worst, z);
        bad += z > 3.0;
    }
    report(7, "averaged drift oracle", bad == 0,
           std::to_string(grid.size()) + " nodes, " + std::to_string(bad) + " beyond 3 SE, worst " + fmt(worst) + " SE");
}

void innovations() {
    const BuiltinModel bm = builtin("SINCOS");
    const std::size_t R = 1000;
    const double T = 1.0;
    std::vector<double> end(R), qv(R);
    parallel_for(R, 0, [&](std::size_t r) {
        SimConfig c = sim(16, T, 0.01, 4);
        c.replica_id = r;
        const PathBundle p = simulate_slow_fast(bm.spec, c);
        FilterConfig fc;
        fc.particles = 1000;
        const FilterTrace tr = run_particle_filter(bm.spec, p, fc, RngStream(kSeed, {r, Purpose::FilterPropagate, 0}));
        end[r] = tr.innovations.dI.col(0).sum() / std::sqrt(T);
        qv[r] = tr.innovations.quadratic_variation()(0);
    });
    const KsResult ks = ks_test_normal(end);
    const Estimate q = mean_se(qv);
    report(8, "innovation Brownianity", ks.p_value >= 0.01 && std::abs(q.value - T) <= 3.0 * q.se,
           "KS p " + fmt(ks.p_value) + " (>= 0.01), QV " + fmt(q.value) + "+-" + fmt(q.se) + " vs T = 1");
}

void poisson() {
    const BuiltinModel bm = builtin("LINGAUSS");
    PoissonParams pp;
    pp.workers = 0;
    const WeightedFn f("y1", [](CVecRef y) { return y(0); }, [](CVecRef) { return Vec::Ones(1); });
    const double zs[] = {0.0, 0.5, -1.0, 1.5, 0.0}, ys[] = {0.5, 1.0, -0.5, 0.25, -1.5};
    bool ok = true;
    std::string detail;
    for (std::uint64_t i = 0; i < 5; ++i) {
        const Vec z = Vec::Constant(1, zs[i]), y = Vec::Constant(1, ys[i]);
        const Estimate v = estimate_Vf(bm.spec, f, z, y, pp, bm.invariant_lookup(), RngStream(kSeed, {i, Purpose::Poisson, 0}));
        const double cf = -ys[i] / (pp.lambda + 1.0);
        const ResidualReport r = check_poisson_residual(bm.spec, f, z, y, pp, bm.invariant_lookup(),
                                                        RngStream(kSeed, {i, Purpose::Poisson, 1}));
        const bool pass = std::abs(v.value - cf) <= 3.0 * v.se && r.verdict == "pass";
        ok = ok && pass;
        detail += "(" + fmt(zs[i]) + "," + fmt(ys[i]) + "): V " + fmt(v.value) + "+-" + fmt(v.se) + " vs " + fmt(cf) +
                  ", residual " + r.verdict + "; ";
    }
    report(9, "Poisson residual", ok, detail);
}

void moments() {
    bool ok = true;
    std::string detail;
    for (const char* name : {"SINCOS", "LINGAUSS", "OU2D"}) {
        const BuiltinModel bm = builtin(name);
        const std::size_t R = 1000;
        const SimConfig base = sim(1, 1.0, 1e-3, 1);
        const auto M = static_cast<Eigen::Index>(base.steps());
        Mat v1(R, M + 1), v2(R, M + 1);
        parallel_for(R, 0, [&](std::size_t r) {
            SimConfig c = base;
            c.replica_id = r;
            const PathBundle p = simulate_slow_fast(bm.spec, c);
            for (Eigen::Index t = 0; t <= M; ++t) {
                const Vec y = p.Y.row(t).transpose();
                const double V = y.dot(bm.A * y);
                v1(static_cast<Eigen::Index>(r), t) = V;
                v2(static_cast<Eigen::Index>(r), t) = V * V;
            }
        });
        const double V0 = bm.spec.y0.dot(bm.A * bm.spec.y0);
        for (int k = 1; k <= 2; ++k) {
            const Mat& v = k == 1 ? v1 : v2;
            const double bound = std::pow(V0, k) + bm.beta0[k - 1] * base.T;
            double worst = -1e300;
            bool pass = true;
            for (Eigen::Index t = 0; t <= M; ++t) {
                const Vec col = v.col(t);
                const Estimate e = mean_se(std::vector<double>(col.data(), col.data() + col.size()));
                worst = std::max(worst, e.value);
                pass = pass && e.value <= bound + 4.0 * e.se;
            }
            ok = ok && pass;
            detail += std::string(name) + " k=" + std::to_string(k) + ": sup " + fmt(worst) + " vs " + fmt(bound) + "; ";
        }
    }
    report(10, "moment bounds", ok, detail);
}

void properties() {
    std::string detail;
    bool ok = true;

    // Bit-identical CSVs across worker counts.
    const fs::path dir = fs::temp_directory_path() / ("slowfast_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    ExperimentConfig ec;
    ec.kind = ExperimentKind::RatesStrong;
    ec.model = "SINCOS";
    ec.sim = sim(1, 0.5, 0.01, 2);
    ec.n_list = {4, 8, 16, 32};
    ec.replicas = 8;
    ec.particles = 200;
    ec.seed = kSeed;
    ec.out = dir;
    ec.workers = 1;
    const ExperimentResult a = run_experiment(ec);
    ec.workers = 4;
    const ExperimentResult b = run_experiment(ec);
    bool same = true;
    for (const char* f : {"rates_strong.csv", "rates_strong_m.csv", "rates_common_w.csv", "mean_sq_t.csv"})
        same = same && fs::exists(a.dir / f) && slurp(a.dir / f) == slurp(b.dir / f);
    fs::remove_all(dir);
    detail += std::string("determinism ") + (same ? "ok" : "MISMATCH");
    ok = ok && same;

    // Dictionary monotonicity of rho.
    const BuiltinModel bm = builtin("SINCOS");
    const TestDictionary full = TestDictionary::defaults(1, 1, bm.A);
    SimConfig c = sim(8, 0.5, 0.01, 2);
    const PathBundle p = simulate_slow_fast(bm.spec, c);
    FilterConfig fc;
    fc.particles = 300;
    fc.keep_clouds = true;
    const FilterTrace tr = run_particle_filter(bm.spec, p, fc, RngStream(kSeed, {}));
    RngStream rng(kSeed, {0, Purpose::Generic, 11});
    bool mono = true;
    for (int trial = 0; trial < 50; ++trial) {
        TestDictionary sub, super;
        for (const auto& f : full.fast) {
            const double u = rng.uniform();
            if (u < 0.4) sub.fast.push_back(f);
            if (u < 0.8) super.fast.push_back(f);
        }
        if (sub.fast.empty()) continue;
        mono = mono && estimate_rho(tr.clouds, bm.invariant_lookup(), p.X, sub).value <=
                           estimate_rho(tr.clouds, bm.invariant_lookup(), p.X, super).value;
    }
    detail += std::string(", rho monotone ") + (mono ? "ok" : "VIOLATED");
    ok = ok && mono;

    // Rate fit on exact power laws.
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const double alpha = -2.0 * rng.uniform(), C = std::exp(4.0 * rng.uniform() - 2.0);
        std::vector<RatePoint> pts;
        for (double n = 2.0 + rng.uniform(); pts.size() < 6; n *= 2.0) pts.push_back({n, C * std::pow(n, alpha), 0.0, true});
        worst = std::max(worst, std::abs(fit_rate(pts).slope - alpha));
    }
    detail += ", fit exactness " + fmt(worst) + " (< 1e-10)";
    ok = ok && worst < 1e-10;

    // Filter without coupling.
    ModelSpec m;
    m.name = "uncoupled";
    m.p = m.q = 1;
    m.b = [](CVecRef x, CVecRef, VecRef out) { out(0) = std::sin(x(0)); };
    m.sigma = [](CVecRef, MatRef out) { out(0, 0) = 1.0; };
    m.h = [](CVecRef, CVecRef y, VecRef out) { out(0) = -y(0); };
    m.eta = [](CVecRef, CVecRef, MatRef out) { out(0, 0) = 1.0; };
    m.x0 = Vec::Zero(1);
    m.y0 = Vec::Zero(1);
    const PathBundle q = simulate_slow_fast(m, sim(4, 1.0, 0.01, 2));
    FilterConfig fu;
    fu.particles = 500;
    fu.keep_clouds = true;
    const FilterTrace tu = run_particle_filter(m, q, fu, RngStream(kSeed, {}));
    const double dev = (tu.innovations.dI - q.inc.dW).cwiseAbs().maxCoeff();
    const double wdev = (tu.clouds.back().weights.array() - 1.0 / 500.0).abs().maxCoeff();
    const bool exact = dev < 1e-12 && tu.resamples == 0 && wdev < 1e-15;
    detail += ", no-coupling |dI - dW| " + fmt(dev) + " resamples " + std::to_string(tu.resamples);
    ok = ok && exact;

    report(11, "property suites", ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    auto want = [&](int id) { return only.empty() || only.count(id) > 0; };
    const auto start = std::chrono::steady_clock::now();
    auto guarded = [&](std::initializer_list<int> ids, const std::string& name, auto&& fn) {
        bool any = false;
        for (int id : ids) any = any || want(id);
        if (!any) return;
        try {
            fn();
        } catch (const std::exception& e) {
            for (int id : ids) report(id, name, false, std::string("error: ") + e.what());
        }
    };
    guarded({1, 2, 4}, "strong sweep", strong_sweep);
    guarded({3}, "weak rate", weak_rate);
    guarded({5}, "Kalman-Bucy agreement", kalman);
    guarded({6}, "invariant oracles", invariant);
    guarded({7}, "averaged drift oracle", averaged_drift);
    guarded({8}, "innovation Brownianity", innovations);
    guarded({9}, "Poisson residual", poisson);
    guarded({10}, "moment bounds", moments);
    guarded({11}, "property suites", properties);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << " in "
              << fmt(secs) << " s" << std::endl;
    return failures == 0 ? 0 : 1;
}
