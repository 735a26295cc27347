#include "slowfast/ergodics.hpp"
#include "slowfast/generator.hpp"
#include "slowfast/metrics.hpp"
#include "slowfast/models.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace slowfast;
using testutil::scalar_model;

namespace {

Estimate moment(const EmpiricalMeasure& mu, int power, double centre = 0.0) {
    return mu.expect([power, centre](CVecRef y) { return std::pow(y(0) - centre, power); });
}

InvariantConfig inv_config(double delta1, std::size_t n = 10000) {
    InvariantConfig c;
    c.n_samples = n;
    c.delta1 = delta1;
    return c;
}

WeightedFn identity_fn() {
    return WeightedFn("y", [](CVecRef y) { return y(0); }, [](CVecRef) { return Vec::Ones(1); });
}

}  // namespace

TEST_CASE("SINCOS invariant law at z = 1") {
    const BuiltinModel bm = builtin("SINCOS");
    const EmpiricalMeasure mu =
        estimate_invariant(bm.spec, Vec::Constant(1, 1.0), inv_config(bm.delta1), RngStream(1, {0, Purpose::Frozen, 0}));
    const Estimate m = moment(mu, 1);
    CHECK(std::abs(m.value - std::sin(1.0)) <= 3.0 * m.se);
    const Estimate v = moment(mu, 2, m.value);
    CHECK(std::abs(v.value - 0.5) <= 3.0 * v.se);
    CHECK(mu.weights().sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.se > 0.0);
    CHECK(mu.size() == 10000);
    CHECK(mu.provenance().burn_in == doctest::Approx(5.0 / bm.delta1));
    CHECK(mu.provenance().thinning == doctest::Approx(1.0 / bm.delta1));
}

TEST_CASE("LINGAUSS invariant law does not depend on z") {
    const BuiltinModel bm = builtin("LINGAUSS");
    for (double z : {-2.0, 0.0, 3.0}) {
        const EmpiricalMeasure mu = estimate_invariant(bm.spec, Vec::Constant(1, z), inv_config(bm.delta1),
                                                       RngStream(2, {static_cast<std::uint64_t>(z + 5), Purpose::Frozen, 0}));
        const Estimate m = moment(mu, 1);
        CHECK(std::abs(m.value) <= 3.0 * m.se);
        const Estimate v = moment(mu, 2, m.value);
        CHECK(std::abs(v.value - 0.5) <= 3.0 * v.se);
    }
}

TEST_CASE("h = -y, eta = sqrt 2 has variance 1") {
    const ModelSpec m = scalar_model([](double, double y) { return y; }, [](double) { return 1.0; },
                                     [](double, double y) { return -y; }, [](double, double) { return std::sqrt(2.0); });
    const EmpiricalMeasure mu = estimate_invariant(m, Vec::Zero(1), inv_config(1.0), RngStream(3, {0, Purpose::Frozen, 0}));
    const Estimate v = moment(mu, 2, moment(mu, 1).value);
    CHECK(std::abs(v.value - 1.0) <= 3.0 * v.se);
}

TEST_CASE("invariant moment bound and sample-size precondition") {
    for (const char* name : {"SINCOS", "LINGAUSS", "OU2D"}) {
        CAPTURE(name);
        const BuiltinModel bm = builtin(name);
        const EmpiricalMeasure mu = estimate_invariant(bm.spec, Vec::Constant(1, 0.8), inv_config(bm.delta1, 4000),
                                                       RngStream(4, {0, Purpose::Frozen, 0}));
        const Mat A = bm.A;
        const Estimate v = mu.expect([&A](CVecRef y) { return y.dot(A * y); });
        CHECK(v.value < bm.beta0[0] / bm.beta1[0] + 3.0 * v.se);
    }
    const BuiltinModel bm = builtin("SINCOS");
    CHECK_THROWS_AS(estimate_invariant(bm.spec, Vec::Zero(1), inv_config(bm.delta1, 99), RngStream(1, {})), ConfigError);
    InvariantConfig none;
    none.n_samples = 1000;
    CHECK_THROWS_AS(estimate_invariant(bm.spec, Vec::Zero(1), none, RngStream(1, {})), ConfigError);
}

TEST_CASE("restarting from the measure leaves dictionary moments unchanged") {
    const BuiltinModel bm = builtin("SINCOS");
    const Vec z = Vec::Constant(1, 0.6);
    const EmpiricalMeasure mu = estimate_invariant(bm.spec, z, inv_config(bm.delta1, 5000), RngStream(5, {0, Purpose::Frozen, 0}));
    const EmpiricalMeasure nu = advance_measure(bm.spec, z, mu, 1.0, 0.005, RngStream(5, {1, Purpose::Frozen, 0}));
    for (const auto& f : bounded_dictionary(1)) {
        const Estimate a = mu.expect(f), b = nu.expect(f);
        CHECK(std::abs(a.value - b.value) <= 3.0 * std::hypot(a.se, b.se));
    }
}

TEST_CASE("empirical measure CSV and constant functions") {
    Mat s(3, 1);
    s << 1.0, 2.0, 3.0;
    const EmpiricalMeasure mu(s, Vec::Constant(3, 2.0), {});
    CHECK(mu.weights().sum() == doctest::Approx(1.0).epsilon(1e-12));
    const Estimate c = mu.expect([](CVecRef) { return 4.0; });
    CHECK(c.value == 4.0);
    CHECK(c.se == 0.0);
    std::ostringstream os;
    mu.write_csv(os);
    CHECK(os.str().rfind("y_1,weight\n1,", 0) == 0);
}

TEST_CASE("H table at t = 0 is exact") {
    const BuiltinModel bm = builtin("SINCOS");
    const GaussianLaw law = bm.oracle.frozen_law(Vec::Zero(1), 0.0);
    Mat yg(2, 1);
    yg << -1.0, 2.0;
    Vec tg(2);
    tg << 0.0, 0.5;
    HConfig hc;
    hc.replicas = 100;
    const auto f = identity_fn();
    const HTable H = estimate_Hf(bm.spec, Vec::Zero(1), f, law, yg, tg, hc, RngStream(1, {}));
    CHECK(H.value(0, 0) == doctest::Approx(-1.0 - law.expect(f.as_scalar()).value).epsilon(1e-14));
    CHECK(H.value(1, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(H.se(0, 0) == 0.0);
}

TEST_CASE("LINGAUSS H for f = y decays as y exp(-t)") {
    const BuiltinModel bm = builtin("LINGAUSS");
    HConfig hc;
    hc.replicas = 200;
    Mat yg(2, 1);
    yg << 2.0, -1.0;
    const Vec tg = Vec::LinSpaced(9, 0.0, 4.0);
    const GaussianLaw law = bm.oracle.frozen_law(Vec::Zero(1), 0.0);
    const HTable H = estimate_Hf(bm.spec, Vec::Constant(1, 0.7), identity_fn(), law, yg, tg, hc, RngStream(2, {}));
    for (Eigen::Index i = 0; i < yg.rows(); ++i)
        for (Eigen::Index k = 0; k < tg.size(); ++k) {
            const double y = yg(i, 0), t = tg(k);
            // Antithetic pairs cancel the noise exactly for linear f; the Euler mean is y (1 - dt)^(t / dt).
            CHECK(H.value(i, k) == doctest::Approx(y * std::pow(1.0 - hc.dt, std::round(t / hc.dt))).epsilon(1e-9));
            CHECK(std::abs(H.value(i, k) - y * std::exp(-t)) < 0.01);
        }
}

TEST_CASE("SINCOS H relaxes: |H_t| <= |H_0| for t >= 1") {
    const BuiltinModel bm = builtin("SINCOS");
    HConfig hc;
    hc.replicas = 4000;
    Mat yg = Mat::Constant(1, 1, 2.0);
    const Vec tg = Vec::LinSpaced(9, 0.0, 4.0);
    const GaussianLaw law = bm.oracle.frozen_law(Vec::Zero(1), hc.dt);
    const HTable H = estimate_Hf(bm.spec, Vec::Zero(1), identity_fn(), law, yg, tg, hc, RngStream(3, {}));
    for (Eigen::Index k = 2; k < tg.size(); ++k) CHECK(std::abs(H.value(0, k)) <= std::abs(H.value(0, 0)) + 3.0 * H.se(0, k));
    CHECK(std::abs(H.value(0, 8)) <= 3.0 * H.se(0, 8) + 0.05);
}

TEST_CASE("ergodic rate fits on LINGAUSS") {
    const BuiltinModel bm = builtin("LINGAUSS");
    HConfig hc;
    hc.replicas = 4000;
    hc.antithetic = false;
    Mat yg = Mat::Constant(1, 1, 3.0);
    const Vec tg = Vec::LinSpaced(13, 0.0, 3.0);
    const GaussianLaw law = bm.oracle.frozen_law(Vec::Zero(1), hc.dt);
    SUBCASE("f = y gives xi = 1") {
        const HTable H = estimate_Hf(bm.spec, Vec::Zero(1), identity_fn(), law, yg, tg, hc, RngStream(4, {}));
        const ErgodicityFit fit = fit_ergodic_rate(H);
        CHECK(std::abs(fit.xi - 1.0) <= 0.1);
        CHECK(fit.r2 > 0.95);
    }
    SUBCASE("f = y^2 gives xi = 2") {
        const WeightedFn sq("y^2", [](CVecRef y) { return y(0) * y(0); }, [](CVecRef y) { return Vec(2.0 * y); });
        const HTable H = estimate_Hf(bm.spec, Vec::Zero(1), sq, law, yg, tg, hc, RngStream(5, {}));
        const ErgodicityFit fit = fit_ergodic_rate(H);
        CHECK(std::abs(fit.xi - 2.0) <= 0.2);
        const std::string js = ergodicity_fit_json(fit);
        for (const char* key : {"\"C\"", "\"xi\"", "\"r2\"", "\"t_lo\"", "\"t_hi\""}) CHECK(js.find(key) != std::string::npos);
    }
    SUBCASE("constant f cannot be fitted") {
        const WeightedFn c("one", [](CVecRef) { return 1.0; }, [](CVecRef) { return Vec::Zero(1); });
        const HTable H = estimate_Hf(bm.spec, Vec::Zero(1), c, law, yg, tg, hc, RngStream(6, {}));
        CHECK(H.value.cwiseAbs().maxCoeff() < 1e-12);
        CHECK_THROWS_AS(fit_ergodic_rate(H), FitError);
    }
}

TEST_CASE("fitted decay rate is positive for every builtin model and dictionary function") {
    for (const char* name : {"SINCOS", "LINGAUSS", "OU2D"}) {
        const BuiltinModel bm = builtin(name);
        const TestDictionary dict = TestDictionary::defaults(bm.spec.p, bm.spec.q, bm.A);
        const Vec z = Vec::Constant(1, 0.3);
        const GaussianLaw law = bm.oracle.frozen_law(z, 0.005);
        Mat yg = Mat::Zero(3, bm.spec.q);
        yg.col(0) << -2.5, 0.0, 2.5;
        const Vec tg = Vec::LinSpaced(13, 0.0, 3.0);
        HConfig hc;
        hc.replicas = 2000;
        for (std::size_t i = 0; i < dict.fast.size(); ++i) {
            CAPTURE(name);
            CAPTURE(dict.fast[i].id());
            const HTable H = estimate_Hf(bm.spec, z, dict.fast[i], law, yg, tg, hc, RngStream(7, {i, Purpose::Frozen, 0}));
            const ErgodicityFit fit = fit_ergodic_rate(H);
            CHECK(fit.xi > 0.0);
        }
    }
}

TEST_CASE("invariant continuity probe") {
    const auto dict = bounded_dictionary(1);
    SUBCASE("LINGAUSS ratio vanishes") {
        const BuiltinModel bm = builtin("LINGAUSS");
        const auto lookup = bm.invariant_lookup();
        const ContinuityProbe p = probe_invariant_continuity(lookup, Vec::Zero(1), Vec::Constant(1, 1.0), dict);
        CHECK(p.ratio.value < 1e-12);
    }
    SUBCASE("SINCOS ratio is finite over random pairs and stable under sample growth") {
        const BuiltinModel bm = builtin("SINCOS");
        const auto lookup = bm.invariant_lookup();
        RngStream rng(9, {});
        // TV between N(m1, 1/2) and N(m2, 1/2) is at most |m1 - m2| / sqrt(pi) <= |z1 - z2| / sqrt(pi);
        // each dictionary member has sup |f| <= 1, so the ratio is at most 2 / sqrt(pi).
        for (int k = 0; k < 10; ++k) {
            const Vec z1 = Vec::Constant(1, 4.0 * rng.uniform() - 2.0);
            const Vec z2 = z1 + Vec::Constant(1, 0.1 + rng.uniform());
            const ContinuityProbe p = probe_invariant_continuity(lookup, z1, z2, dict);
            CHECK(std::isfinite(p.ratio.value));
            CHECK(p.ratio.value <= 2.0 / std::sqrt(std::numbers::pi) + 1e-12);
        }
        InvariantConfig small = inv_config(bm.delta1, 4000), large = inv_config(bm.delta1, 16000);
        const auto l1 = invariant_estimator(bm.spec, small, 11);
        const auto l2 = invariant_estimator(bm.spec, large, 12);
        const Vec z1 = Vec::Zero(1), z2 = Vec::Constant(1, 0.5);
        const ContinuityProbe a = probe_invariant_continuity(l1, z1, z2, dict);
        const ContinuityProbe b = probe_invariant_continuity(l2, z1, z2, dict);
        CHECK(std::abs(a.ratio.value - b.ratio.value) <= 3.0 * std::hypot(a.ratio.se, b.ratio.se));
    }
    SUBCASE("identical points are rejected") {
        const auto lookup = builtin("SINCOS").invariant_lookup();
        CHECK_THROWS_AS(probe_invariant_continuity(lookup, Vec::Zero(1), Vec::Zero(1), dict), ConfigError);
    }
}

TEST_CASE("generator of the invariant law integrates to zero") {
    const BuiltinModel bm = builtin("SINCOS");
    const Vec z = Vec::Constant(1, 0.7);
    const EmpiricalMeasure mu = estimate_invariant(bm.spec, z, inv_config(bm.delta1, 20000), RngStream(13, {}));
    for (double k : {0.5, 1.0, 2.0}) {
        const TwiceDiff g{[k](CVecRef y) { return std::sin(k * y(0)); }, {}, {}};
        const Estimate e = mu.expect([&](CVecRef y) { return apply_generator_fast(bm.spec, z, g, y); });
        CHECK(std::abs(e.value) <= 3.0 * e.se);
    }
}
