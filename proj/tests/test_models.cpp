#include "slowfast/generator.hpp"
#include "slowfast/models.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace slowfast;
using testutil::scalar_model;

namespace {

/// Composite Simpson integral of g against the N(m, v) density over m +- 12 sd.
double simpson_gauss(const std::function<double(double)>& g, double m, double v, int panels = 4000) {
    const double sd = std::sqrt(v);
    const double a = m - 12.0 * sd, b = m + 12.0 * sd;
    const double h = (b - a) / panels;
    auto dens = [&](double y) { return std::exp(-(y - m) * (y - m) / (2.0 * v)) / std::sqrt(2.0 * std::numbers::pi * v); };
    double s = g(a) * dens(a) + g(b) * dens(b);
    for (int i = 1; i < panels; ++i) {
        const double y = a + i * h;
        s += (i % 2 ? 4.0 : 2.0) * g(y) * dens(y);
    }
    return s * h / 3.0;
}

}  // namespace

TEST_CASE("Lyapunov certificates") {
    SUBCASE("SINCOS with A = 1, delta0 = delta1 = 1/2 is valid") {
        const BuiltinModel bm = builtin("SINCOS");
        const StabilityCert c = check_lyapunov(bm.spec, Mat::Identity(1, 1), 0.5, 0.5);
        CHECK(c.valid);
        CHECK(c.worst_margin <= 0.0);
        CHECK(c.samples > 0);
    }
    SUBCASE("LINGAUSS is valid with delta0 = 0, delta1 = 1") {
        const StabilityCert c = check_lyapunov(builtin("LINGAUSS").spec, Mat::Identity(1, 1), 0.0, 1.0);
        CHECK(c.valid);
    }
    SUBCASE("explosive drift is rejected with a violating point") {
        const ModelSpec m = scalar_model([](double, double) { return 0.0; }, [](double) { return 1.0; },
                                         [](double, double y) { return y; }, [](double, double) { return 1.0; });
        for (auto [d0, d1] : {std::pair{0.5, 0.5}, std::pair{10.0, 0.01}, std::pair{100.0, 2.0}}) {
            const StabilityCert c = check_lyapunov(m, Mat::Identity(1, 1), d0, d1);
            CHECK_FALSE(c.valid);
            CHECK(c.worst_margin > 0.0);
            const double y = c.worst_y(0);
            CHECK(y * y - d0 + d1 * y * y > 0.0);
        }
    }
    SUBCASE("A must be symmetric positive definite") {
        const BuiltinModel bm = builtin("SINCOS");
        CHECK_THROWS_AS(check_lyapunov(bm.spec, Mat::Constant(1, 1, -1.0), 0.5, 0.5), ConfigError);
        const BuiltinModel ou = builtin("OU2D");
        Mat A(2, 2);
        A << 1.0, 0.5, 0.0, 1.0;
        CHECK_THROWS_AS(check_lyapunov(ou.spec, A, 1.0, 0.1), ConfigError);
    }
}

TEST_CASE("regularity probes") {
    SUBCASE("SINCOS constants") {
        const RegularityReport r = check_regularity(builtin("SINCOS").spec);
        CHECK(r.b_sup == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(r.lip_b_y == doctest::Approx(1.0).epsilon(1e-2));
        CHECK(r.lip_b_y <= 1.0 + 1e-6);
        CHECK(r.ellipticity == doctest::Approx(1.0));
        CHECK(r.h_at_y0_sup <= 1.0 + 1e-12);
        CHECK(r.h_at_y0_sup == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(r.bounded_b);
    }
    SUBCASE("b = y is flagged unbounded") {
        const ModelSpec m = scalar_model([](double, double y) { return y; }, [](double) { return 1.0; },
                                         [](double, double y) { return -y; }, [](double, double) { return 1.0; });
        RegularitySpec spec;
        spec.declared.b_sup = 1.0;
        const RegularityReport r = check_regularity(m, spec);
        CHECK_FALSE(r.bounded_b);
        CHECK(r.b_sup_outer > r.b_sup);
        CHECK_FALSE(r.pass);
    }
}

TEST_CASE("every builtin model passes its own certificates") {
    for (const char* name : {"SINCOS", "LINGAUSS", "OU2D"}) {
        CAPTURE(name);
        const BuiltinModel bm = builtin(name);
        RegularitySpec rs;
        rs.declared = bm.bounds;
        CHECK(check_regularity(bm.spec, rs).pass);
        CHECK(check_lyapunov(bm.spec, bm.A, bm.delta0, bm.delta1).valid);
        CHECK(bm.bounded_b == check_regularity(bm.spec).bounded_b);
    }
    CHECK_THROWS_AS(builtin("NOPE"), ConfigError);
}

TEST_CASE("closed-form oracle values") {
    const BuiltinModel s = builtin("SINCOS");
    CHECK(s.oracle.averaged_drift(Vec::Zero(1), 0.0)(0) == doctest::Approx(std::exp(-0.25)).epsilon(1e-15));
    CHECK(s.oracle.averaged_drift(Vec::Constant(1, std::numbers::pi / 2), 0.0)(0) ==
          doctest::Approx(std::exp(-0.25) * std::cos(1.0)).epsilon(1e-15));
    const GaussianLaw law = s.oracle.frozen_law(Vec::Constant(1, 0.4), 0.0);
    CHECK(law.mean()(0) == doctest::Approx(std::sin(0.4)));
    CHECK(law.cov()(0, 0) == doctest::Approx(0.5));

    const BuiltinModel l = builtin("LINGAUSS");
    for (double z : {-3.0, 0.0, 2.5}) {
        const GaussianLaw g = l.oracle.frozen_law(Vec::Constant(1, z), 0.0);
        CHECK(g.mean()(0) == 0.0);
        CHECK(g.cov()(0, 0) == doctest::Approx(0.5));
    }
    REQUIRE(l.oracle.kalman);
    CHECK(l.oracle.kalman->a == doctest::Approx(-1.0));
    CHECK(l.oracle.kalman->c == doctest::Approx(1.0));
    CHECK(l.oracle.kalman->sigma == doctest::Approx(1.0));
    CHECK(l.oracle.kalman->eta == doctest::Approx(1.0));
    CHECK_THROWS_AS(linear_gaussian_params(s.spec), ConfigError);
}

TEST_CASE("declared averaged drift equals Simpson quadrature against the declared law") {
    for (double h : {0.0, 0.05}) {
        const BuiltinModel s = builtin("SINCOS");
        for (double x = -3.0; x <= 3.0; x += 0.5) {
            const Vec xv = Vec::Constant(1, x);
            const GaussianLaw law = s.oracle.frozen_law(xv, h);
            const double ref = simpson_gauss([](double y) { return std::cos(y); }, law.mean()(0), law.cov()(0, 0));
            CHECK(s.oracle.averaged_drift(xv, h)(0) == doctest::Approx(ref).epsilon(1e-8));
        }
        const BuiltinModel o = builtin("OU2D");
        for (double x = -3.0; x <= 3.0; x += 0.5) {
            const Vec xv = Vec::Constant(1, x);
            const GaussianLaw law = o.oracle.frozen_law(xv, h);
            // b = sin(y1) + cos(y2)/2 only needs the marginals.
            const double ref =
                simpson_gauss([](double y) { return std::sin(y); }, law.mean()(0), law.cov()(0, 0)) +
                0.5 * simpson_gauss([](double y) { return std::cos(y); }, law.mean()(1), law.cov()(1, 1));
            CHECK(o.oracle.averaged_drift(xv, h)(0) == doctest::Approx(ref).epsilon(1e-8));
        }
    }
}

TEST_CASE("OU2D stationary covariance solves the Lyapunov equation") {
    const BuiltinModel o = builtin("OU2D");
    const GaussianLaw law = o.oracle.frozen_law(Vec::Zero(1), 0.0);
    Mat K(2, 2);
    K << 1.0, 2.0, 0.0, 1.0;
    Mat Q = Mat::Zero(2, 2);
    Q(0, 0) = 1.0;
    Q(1, 1) = 0.49;
    const Mat S = law.cov();
    CHECK((K * S + S * K.transpose() - Q).norm() < 1e-12);
}

TEST_CASE("moment drift constants cover the sampled generator") {
    for (const char* name : {"SINCOS", "LINGAUSS", "OU2D"}) {
        CAPTURE(name);
        const BuiltinModel bm = builtin(name);
        for (int k = 1; k <= 2; ++k) {
            SampleSpec s;
            s.y_radius = 10.0 * std::max(1.0, std::sqrt(bm.delta0 / bm.delta1));
            CHECK(sampled_moment_drift(bm.spec, bm.A, k, bm.beta1[k - 1], s) <= bm.beta0[k - 1]);
        }
    }
}

TEST_CASE("SINCOS quadratic weight obeys the drift condition with beta0 = 2, beta1 = 1") {
    const BuiltinModel bm = builtin("SINCOS");
    const TwiceDiff g = lyapunov_weight(Mat::Identity(1, 1), 1);
    for (double z = -4.0; z <= 4.0; z += 0.37)
        for (double y = -6.0; y <= 6.0; y += 0.23) {
            const double Lg = apply_generator_fast(bm.spec, Vec::Constant(1, z), g, Vec::Constant(1, y));
            REQUIRE(Lg == doctest::Approx(1.0 + 2.0 * y * (std::sin(z) - y)).epsilon(1e-12));
            REQUIRE(Lg <= 2.0 - y * y + 1e-12);
        }
}
