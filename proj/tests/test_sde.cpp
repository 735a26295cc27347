#include "slowfast/filter.hpp"
#include "slowfast/models.hpp"
#include "slowfast/parallel.hpp"
#include "slowfast/sde.hpp"
#include "slowfast/stats.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace slowfast;
using testutil::scalar_model;

namespace {

SimConfig config(int n, double T, double dt, int substeps, std::uint64_t seed = 1, std::uint64_t replica = 0) {
    SimConfig c;
    c.n = n;
    c.T = T;
    c.dt_slow = dt;
    c.substeps = substeps;
    c.seed = seed;
    c.replica_id = replica;
    return c;
}

}  // namespace

TEST_CASE("zero dynamics keep the initial state") {
    const ModelSpec m = scalar_model([](double, double) { return 0.0; }, [](double) { return 0.0; },
                                     [](double, double) { return 0.0; }, [](double, double) { return 0.0; }, 0.7, -1.3);
    const PathBundle p = simulate_slow_fast(m, config(5, 1.0, 0.01, 4));
    CHECK((p.X.array() == 0.7).all());
    CHECK((p.Y.array() == -1.3).all());
    CHECK(p.grid(0) == 0.0);
    CHECK(p.grid(p.grid.size() - 1) == doctest::Approx(1.0));
}

TEST_CASE("SINCOS fourth moment stays below the Lyapunov bound") {
    const BuiltinModel bm = builtin("SINCOS");
    const std::size_t R = 1000;
    const SimConfig base = config(1, 1.0, 1e-3, 1, 21);
    const auto M = static_cast<Eigen::Index>(base.steps());
    Mat v1(R, M + 1), v2(R, M + 1);
    parallel_for(R, 0, [&](std::size_t r) {
        SimConfig c = base;
        c.replica_id = r;
        const PathBundle p = simulate_slow_fast(bm.spec, c);
        const Vec y2 = p.Y.col(0).array().square();
        v1.row(static_cast<Eigen::Index>(r)) = y2.transpose();
        v2.row(static_cast<Eigen::Index>(r)) = y2.array().square().matrix().transpose();
    });
    const double y0 = bm.spec.y0(0);
    for (int k = 1; k <= 2; ++k) {
        const Mat& v = k == 1 ? v1 : v2;
        const double bound = std::pow(y0 * y0, k) + bm.beta0[k - 1] * base.T;
        for (Eigen::Index t = 0; t <= M; ++t) {
            std::vector<double> col(v.col(t).data(), v.col(t).data() + R);
            const Estimate e = mean_se(col);
            REQUIRE(e.value <= bound + 4.0 * e.se);
        }
    }
}

TEST_CASE("LINGAUSS at n = 64 reaches the stationary variance 1/2 by T = 2") {
    const BuiltinModel bm = builtin("LINGAUSS");
    const std::size_t R = 10000;
    std::vector<double> yT(R);
    parallel_for(R, 0, [&](std::size_t r) {
        const PathBundle p = simulate_slow_fast(bm.spec, config(64, 2.0, 1e-3, 4, 5, r));
        yT[r] = p.Y(p.Y.rows() - 1, 0);
    });
    const Estimate v = testutil::variance_of(yT);
    CHECK(std::abs(v.value - 0.5) <= 3.0 * v.se);
}

TEST_CASE("slow increments have variance dt") {
    const BuiltinModel bm = builtin("SINCOS");
    std::vector<double> dw;
    for (std::uint64_t r = 0; r < 50; ++r) {
        const PathBundle p = simulate_slow_fast(bm.spec, config(4, 1.0, 0.01, 2, 3, r));
        for (Eigen::Index k = 0; k < p.inc.dW.rows(); ++k) dw.push_back(p.inc.dW(k, 0) * p.inc.dW(k, 0));
    }
    const Estimate e = mean_se(dw);
    CHECK(std::abs(e.value - 0.01) <= 3.0 * e.se);
}

TEST_CASE("frozen SINCOS long-run moments") {
    const BuiltinModel bm = builtin("SINCOS");
    SUBCASE("z = 0: mean 0") {
        RngStream rng(2, {0, Purpose::Frozen, 0});
        const FrozenPath fp = simulate_frozen(bm.spec, Vec::Zero(1), Vec::Zero(1), 2000.0, 0.01, rng);
        std::vector<double> y(fp.Y.data() + 1000, fp.Y.data() + fp.Y.rows());
        const Estimate m = batch_means(y);
        CHECK(std::abs(m.value) <= 3.0 * m.se);
    }
    SUBCASE("z = pi/2: mean 1, variance 1/2") {
        RngStream rng(2, {0, Purpose::Frozen, 1});
        const FrozenPath fp = simulate_frozen(bm.spec, Vec::Constant(1, std::numbers::pi / 2), Vec::Zero(1), 4000.0,
                                              0.01, rng);
        std::vector<double> y(fp.Y.data() + 1000, fp.Y.data() + fp.Y.rows());
        const Estimate m = batch_means(y);
        CHECK(std::abs(m.value - 1.0) <= 3.0 * m.se);
        std::vector<double> sq;
        for (double v : y) sq.push_back((v - 1.0) * (v - 1.0));
        const Estimate v = batch_means(sq);
        CHECK(std::abs(v.value - 0.5) <= 3.0 * v.se);
    }
}

TEST_CASE("frozen pure diffusion is a Brownian motion") {
    const ModelSpec m = scalar_model([](double, double) { return 0.0; }, [](double) { return 1.0; },
                                     [](double, double) { return 0.0; }, [](double, double) { return 1.0; });
    const std::size_t R = 4000;
    const double y_init = 0.3;
    std::vector<double> a(R), b(R), c(R);
    for (std::size_t r = 0; r < R; ++r) {
        RngStream rng(6, {r, Purpose::Frozen, 0});
        const FrozenPath fp = simulate_frozen(m, Vec::Zero(1), Vec::Constant(1, y_init), 2.0, 0.01, rng);
        a[r] = fp.Y(50, 0) - y_init;
        b[r] = fp.Y(100, 0) - y_init;
        c[r] = fp.Y(200, 0) - y_init;
    }
    const double ts[] = {0.5, 1.0, 2.0};
    const std::vector<double>* cols[] = {&a, &b, &c};
    for (int i = 0; i < 3; ++i) {
        const Estimate v = testutil::variance_of(*cols[i]);
        CHECK(std::abs(v.value - ts[i]) <= 3.0 * v.se);
    }
}

TEST_CASE("determinism and increment reuse") {
    const BuiltinModel bm = builtin("OU2D");
    const SimConfig c = config(8, 0.5, 0.005, 4, 99, 3);
    const PathBundle p1 = simulate_slow_fast(bm.spec, c);
    const PathBundle p2 = simulate_slow_fast(bm.spec, c);
    CHECK(p1.X == p2.X);
    CHECK(p1.Y == p2.Y);
    const PathBundle p3 = simulate_slow_fast(bm.spec, c, p1.inc);
    CHECK(p1.X == p3.X);
    CHECK(p1.Y == p3.Y);
    SimConfig other = c;
    other.replica_id = 4;
    CHECK(simulate_slow_fast(bm.spec, other).X != p1.X);
}

TEST_CASE("b = 0, sigma = 1 gives X_T ~ N(x0, T)") {
    const ModelSpec m = scalar_model([](double, double) { return 0.0; }, [](double) { return 1.0; },
                                     [](double, double y) { return -y; }, [](double, double) { return 1.0; }, 0.4);
    const std::size_t R = 10000;
    const double T = 1.5;
    std::vector<double> z(R);
    for (std::size_t r = 0; r < R; ++r) {
        const PathBundle p = simulate_slow_fast(m, config(2, T, 0.05, 1, 17, r));
        z[r] = (p.X(p.X.rows() - 1, 0) - 0.4) / std::sqrt(T);
    }
    CHECK(ks_test_normal(z).p_value > 0.01);
}

TEST_CASE("divergence and configuration errors") {
    const ModelSpec blow = scalar_model([](double, double) { return 0.0; }, [](double) { return 1.0; },
                                        [](double, double y) { return y * y * y * y; },
                                        [](double, double) { return 1.0; }, 0.0, 5.0);
    SimConfig c = config(1, 10.0, 0.01, 1);
    bool thrown = false;
    try {
        simulate_slow_fast(blow, c);
    } catch (const DivergenceError& e) {
        thrown = true;
        CHECK(e.index() >= 1);
    }
    CHECK(thrown);

    const BuiltinModel bm = builtin("SINCOS");
    CHECK_THROWS_AS(simulate_slow_fast(bm.spec, config(1000, 1.0, 0.01, 1)), ConfigError);  // stability cap
    CHECK_THROWS_AS(simulate_slow_fast(bm.spec, config(1, 1.0, 0.3, 1)), ConfigError);      // not a multiple
    CHECK_THROWS_AS(simulate_slow_fast(bm.spec, config(0, 1.0, 0.01, 1)), ConfigError);
    ModelSpec bad = bm.spec;
    bad.x0 = Vec::Zero(2);
    CHECK_THROWS_AS(simulate_slow_fast(bad, config(1, 1.0, 0.01, 1)), ConfigError);

    const PathBundle p = simulate_slow_fast(bm.spec, config(1, 1.0, 0.01, 1));
    Increments short_inc = p.inc;
    short_inc.dW.conservativeResize(10, 1);
    CHECK_THROWS_AS(simulate_slow_fast(bm.spec, config(1, 1.0, 0.01, 1), short_inc), ConfigError);
}

TEST_CASE("reconstruction from innovations") {
    const BuiltinModel bm = builtin("SINCOS");
    FilterConfig fc;
    fc.particles = 200;
    SUBCASE("own innovations reproduce the path over 100 paths") {
        double worst = 0.0;
        for (std::uint64_t r = 0; r < 100; ++r) {
            const PathBundle p = simulate_slow_fast(bm.spec, config(8, 0.5, 0.005, 2, 12, r));
            const FilterTrace tr = run_particle_filter(bm.spec, p, fc, RngStream(12, {r, Purpose::FilterPropagate, 0}));
            const Mat Xr = reconstruct_slow_from_innovations(bm.spec, p, tr.pi_b.topRows(p.X.rows() - 1),
                                                             tr.innovations.dI);
            worst = std::max(worst, (Xr - p.X).cwiseAbs().maxCoeff());
        }
        CHECK(worst < 1e-10);
    }
    SUBCASE("perturbing one increment shifts the tail by sigma * eps") {
        const PathBundle p = simulate_slow_fast(bm.spec, config(8, 0.5, 0.005, 2, 13));
        const auto M = p.X.rows() - 1;
        Mat pib = Mat::Constant(M, 1, 0.3);
        Mat dI = p.inc.dW;
        const Mat X0 = reconstruct_slow_from_innovations(bm.spec, p, pib, dI);
        const double eps = 1e-3;
        dI(40, 0) += eps;
        const Mat X1 = reconstruct_slow_from_innovations(bm.spec, p, pib, dI);
        CHECK((X1.topRows(41) - X0.topRows(41)).cwiseAbs().maxCoeff() == 0.0);
        CHECK(((X1.bottomRows(M - 40) - X0.bottomRows(M - 40)).array() - eps).abs().maxCoeff() < 1e-14);
        CHECK_THROWS_AS(reconstruct_slow_from_innovations(bm.spec, p, pib.topRows(M - 1), dI), ConfigError);
    }
}

TEST_CASE("path and increment CSV layout") {
    const BuiltinModel bm = builtin("OU2D");
    const PathBundle p = simulate_slow_fast(bm.spec, config(2, 0.02, 0.01, 2));
    std::ostringstream os, slow, fast;
    write_path_csv(os, p);
    CHECK(os.str().rfind("t,X_1,Y_1,Y_2\n0,", 0) == 0);
    write_increments_csv(slow, fast, p);
    CHECK(slow.str().rfind("k,dW_1\n", 0) == 0);
    CHECK(fast.str().rfind("j,dB_1,dB_2\n", 0) == 0);
    std::size_t lines = 0;
    for (char ch : os.str()) lines += ch == '\n';
    CHECK(lines == 4);
}
