#include "slowfast/models.hpp"

#include "slowfast/generator.hpp"
#include "slowfast/rng.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <numbers>

namespace slowfast {

namespace {

double spectral_norm(const Mat& m) {
    if (m.size() == 1) return std::abs(m(0, 0));
    return Eigen::JacobiSVD<Mat>(m).singularValues()(0);
}

double min_singular_value(const Mat& m) {
    if (m.size() == 1) return std::abs(m(0, 0));
    const auto sv = Eigen::JacobiSVD<Mat>(m).singularValues();
    return sv(sv.size() - 1);
}

void require_spd(const Mat& A, int q) {
    if (A.rows() != q || A.cols() != q) throw ConfigError("Lyapunov matrix A has wrong shape");
    if (!A.isApprox(A.transpose(), 1e-12) && (A - A.transpose()).norm() > 1e-12)
        throw ConfigError("Lyapunov matrix A is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(A);
    if (es.eigenvalues().minCoeff() <= 0.0) throw ConfigError("Lyapunov matrix A is not positive definite");
}

double default_radius(double delta0, double delta1) {
    return 10.0 * std::max(1.0, delta1 > 0.0 ? std::sqrt(delta0 / delta1) : 1.0);
}

/// Uniform point in the box [lo, hi]^d.
Vec sample_box(RngStream& rng, int d, double lo, double hi) {
    Vec z(d);
    for (int i = 0; i < d; ++i) z(i) = lo + (hi - lo) * rng.uniform();
    return z;
}

/// Uniform point in the ball of radius r, or on its sphere when `surface`.
Vec sample_ball(RngStream& rng, int d, double r, bool surface) {
    Vec y(d);
    for (int i = 0; i < d; ++i) y(i) = rng.normal();
    const double nrm = y.norm();
    if (nrm == 0.0) return Vec::Zero(d);
    const double rad = surface ? r : r * std::pow(rng.uniform(), 1.0 / d);
    return y * (rad / nrm);
}

Vec random_direction(RngStream& rng, int d) {
    Vec u(d);
    do {
        for (int i = 0; i < d; ++i) u(i) = rng.normal();
    } while (u.norm() == 0.0);
    return u / u.norm();
}

}  // namespace

StabilityCert check_lyapunov(const ModelSpec& model, const Mat& A, double delta0, double delta1,
                             const SampleSpec& sample) {
    model.validate();
    require_spd(A, model.q);
    if (delta0 < 0.0 || !(delta1 > 0.0)) throw ConfigError("Lyapunov constants must satisfy delta0 >= 0, delta1 > 0");
    StabilityCert cert;
    cert.A = A;
    cert.delta0 = delta0;
    cert.delta1 = delta1;
    cert.z_lo = sample.z_lo;
    cert.z_hi = sample.z_hi;
    cert.y_radius = sample.y_radius.value_or(default_radius(delta0, delta1));
    cert.samples = sample.samples;
    cert.worst_margin = -std::numeric_limits<double>::infinity();

    RngStream rng(sample.seed, {0, Purpose::Generic, 101});
    Vec hv(model.q);
    double tol = 0.0;
    for (std::size_t s = 0; s < sample.samples; ++s) {
        const Vec z = sample_box(rng, model.p, sample.z_lo, sample.z_hi);
        const Vec y = sample_ball(rng, model.q, cert.y_radius, s % 4 == 3);
        model.h(z, y, hv);
        const Vec Ay = A * y;
        const double lhs = hv.dot(Ay);
        const double vy = y.dot(Ay);
        const double margin = lhs - delta0 + delta1 * vy;
        if (margin > cert.worst_margin) {
            cert.worst_margin = margin;
            cert.worst_z = z;
            cert.worst_y = y;
            tol = 1e-12 * (1.0 + std::abs(lhs) + delta0 + delta1 * vy);
        }
    }
    cert.valid = cert.worst_margin <= tol;
    return cert;
}

RegularityReport check_regularity(const ModelSpec& model, const RegularitySpec& spec) {
    model.validate();
    const int p = model.p, q = model.q;
    const double R = spec.region.y_radius.value_or(10.0);
    const Vec y_anchor = spec.y_anchor.size() == q ? spec.y_anchor : Vec::Zero(q);
    RngStream rng(spec.region.seed, {0, Purpose::Generic, 202});
    RegularityReport rep;
    rep.sigma_min_sv = rep.eta_min_sv = std::numeric_limits<double>::infinity();

    Vec bv(p), bv2(p), hv(q), hv2(q);
    Mat sig(p, p), sig2(p, p), eta(q, q), eta2(q, q);
    for (std::size_t s = 0; s < spec.region.samples; ++s) {
        const Vec x = sample_box(rng, p, spec.region.z_lo, spec.region.z_hi);
        const Vec y = sample_ball(rng, q, R, s % 4 == 3);
        const Vec y_out = sample_ball(rng, q, 4.0 * R, s % 4 == 3);
        model.b(x, y, bv);
        rep.b_sup = std::max(rep.b_sup, bv.norm());
        model.b(x, y_out, bv2);
        rep.b_sup_outer = std::max(rep.b_sup_outer, bv2.norm());
        model.eta(x, y, eta);
        rep.eta_sup = std::max(rep.eta_sup, spectral_norm(eta));
        rep.eta_min_sv = std::min(rep.eta_min_sv, min_singular_value(eta));
        model.h(x, y_anchor, hv);
        rep.h_at_y0_sup = std::max(rep.h_at_y0_sup, hv.norm());
        model.h(x, y, hv);
        rep.h_growth = std::max(rep.h_growth, hv.squaredNorm() / (1.0 + y.squaredNorm()));
        model.sigma(x, sig);
        rep.sigma_growth = std::max(rep.sigma_growth, std::pow(spectral_norm(sig), 2) / (1.0 + x.squaredNorm()));
        rep.sigma_min_sv = std::min(rep.sigma_min_sv, min_singular_value(sig));
    }

    for (std::size_t s = 0; s < spec.pairs; ++s) {
        const Vec x = sample_box(rng, p, spec.region.z_lo, spec.region.z_hi);
        const Vec y = sample_ball(rng, q, R, false);
        const double rx = 1e-3 + rng.uniform();
        const double ry = 1e-3 + rng.uniform();
        const Vec x2 = x + rx * random_direction(rng, p);
        const Vec y2 = y + ry * random_direction(rng, q);
        // Moves in x.
        model.b(x, y, bv);
        model.b(x2, y, bv2);
        rep.lip_b_x = std::max(rep.lip_b_x, (bv - bv2).norm() / rx);
        model.h(x, y, hv);
        model.h(x2, y, hv2);
        rep.lip_h_x = std::max(rep.lip_h_x, (hv - hv2).norm() / rx);
        model.sigma(x, sig);
        model.sigma(x2, sig2);
        rep.lip_sigma = std::max(rep.lip_sigma, spectral_norm(sig - sig2) / rx);
        model.eta(x, y, eta);
        model.eta(x2, y, eta2);
        rep.lip_eta_x = std::max(rep.lip_eta_x, spectral_norm(eta - eta2) / rx);
        // Moves in y.
        model.b(x, y2, bv2);
        rep.lip_b_y = std::max(rep.lip_b_y, (bv - bv2).norm() / ry);
        model.h(x, y2, hv2);
        rep.lip_h_y = std::max(rep.lip_h_y, (hv - hv2).norm() / ry);
        model.eta(x, y2, eta2);
        rep.lip_eta_y = std::max(rep.lip_eta_y, spectral_norm(eta - eta2) / ry);
    }
    rep.ellipticity = std::pow(std::min(rep.sigma_min_sv, rep.eta_min_sv), 2);
    rep.bounded_b = rep.b_sup_outer <= 1.01 * rep.b_sup + 1e-12;

    auto fail = [&rep](std::string why) {
        rep.pass = false;
        rep.failures.push_back(std::move(why));
    };
    const auto& d = spec.declared;
    constexpr double slack = 1.0 + 1e-9;
    if (d.b_sup) {
        if (!rep.bounded_b) fail("b is not bounded: sup grows with the sampled radius");
        else if (rep.b_sup > *d.b_sup * slack) fail("sup |b| exceeds the declared bound");
    }
    if (d.eta_sup && rep.eta_sup > *d.eta_sup * slack) fail("sup |eta| exceeds the declared bound");
    if (d.h_at_y0_sup && rep.h_at_y0_sup > *d.h_at_y0_sup * slack) fail("sup |h(z, y0)| exceeds the declared bound");
    if (d.lipschitz) {
        const double worst = std::max({rep.lip_b_x, rep.lip_b_y, rep.lip_h_x, rep.lip_h_y, rep.lip_sigma,
                                       rep.lip_eta_x, rep.lip_eta_y});
        if (worst > *d.lipschitz * slack) fail("a Lipschitz difference quotient exceeds the declared constant");
    }
    if (d.ellipticity && rep.ellipticity < *d.ellipticity / slack) fail("ellipticity below the declared constant");
    return rep;
}

LinearGaussianParams linear_gaussian_params(const ModelSpec& model) {
    model.validate();
    if (model.p != 1 || model.q != 1) throw ConfigError("Kalman-Bucy oracle requires p = q = 1");
    auto b = [&model](double x, double y) {
        Vec out(1);
        model.b(Vec::Constant(1, x), Vec::Constant(1, y), out);
        return out(0);
    };
    auto h = [&model](double x, double y) {
        Vec out(1);
        model.h(Vec::Constant(1, x), Vec::Constant(1, y), out);
        return out(0);
    };
    auto sig = [&model](double x) {
        Mat out(1, 1);
        model.sigma(Vec::Constant(1, x), out);
        return out(0, 0);
    };
    auto eta = [&model](double x, double y) {
        Mat out(1, 1);
        model.eta(Vec::Constant(1, x), Vec::Constant(1, y), out);
        return out(0, 0);
    };
    LinearGaussianParams lg;
    lg.c = b(0.0, 1.0) - b(0.0, 0.0);
    lg.a = h(0.0, 1.0) - h(0.0, 0.0);
    lg.sigma = sig(0.0);
    lg.eta = eta(0.0, 0.0);
    const double xs[] = {-2.3, -0.7, 0.0, 0.4, 1.9};
    const double ys[] = {-3.1, -1.0, 0.5, 2.2};
    auto close = [](double u, double v) { return std::abs(u - v) <= 1e-9 * (1.0 + std::abs(u) + std::abs(v)); };
    for (double x : xs) {
        if (!close(sig(x), lg.sigma)) throw ConfigError("model is not linear-Gaussian: sigma depends on x");
        for (double y : ys) {
            if (!close(b(x, y), lg.c * y + b(x, 0.0)))
                throw ConfigError("model is not linear-Gaussian: b is not affine in y with constant slope");
            if (!close(h(x, y), lg.a * y + h(x, 0.0)))
                throw ConfigError("model is not linear-Gaussian: h is not affine in y with constant slope");
            if (!close(eta(x, y), lg.eta)) throw ConfigError("model is not linear-Gaussian: eta is not constant");
        }
    }
    if (lg.sigma == 0.0) throw ConfigError("Kalman-Bucy oracle requires sigma != 0");
    auto bf = model.b;
    auto hf = model.h;
    lg.d = [bf](double x) {
        Vec out(1);
        bf(Vec::Constant(1, x), Vec::Zero(1), out);
        return out(0);
    };
    lg.g = [hf](double x) {
        Vec out(1);
        hf(Vec::Constant(1, x), Vec::Zero(1), out);
        return out(0);
    };
    return lg;
}

InvariantLookup BuiltinModel::invariant_lookup(double h) const {
    auto law = oracle.frozen_law;
    return [law, h](CVecRef z) -> std::shared_ptr<const Law> { return std::make_shared<GaussianLaw>(law(z, h)); };
}

double sampled_moment_drift(const ModelSpec& model, const Mat& A, int k, double beta1, const SampleSpec& sample) {
    const TwiceDiff w = lyapunov_weight(A, k);
    const double R = sample.y_radius.value_or(10.0);
    RngStream rng(sample.seed, {0, Purpose::Generic, 303});
    double sup = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < sample.samples; ++s) {
        const Vec z = sample_box(rng, model.p, sample.z_lo, sample.z_hi);
        const Vec y = sample_ball(rng, model.q, R, false);
        sup = std::max(sup, apply_generator_fast(model, z, w, y) + beta1 * w.value(y));
    }
    return sup;
}

namespace {

BuiltinModel make_sincos() {
    BuiltinModel m;
    auto& s = m.spec;
    s.name = "SINCOS";
    s.p = s.q = 1;
    s.b = [](CVecRef, CVecRef y, VecRef out) { out(0) = std::cos(y(0)); };
    s.sigma = [](CVecRef, MatRef out) { out(0, 0) = 1.0; };
    s.h = [](CVecRef x, CVecRef y, VecRef out) { out(0) = std::sin(x(0)) - y(0); };
    s.eta = [](CVecRef, CVecRef, MatRef out) { out(0, 0) = 1.0; };
    s.eta_depends_on_y = false;
    s.freeze_h = [](CVecRef x) -> BatchFn {
        const double sx = std::sin(x(0));
        return [sx](CMatRef ys, MatRef out) { out.array() = sx - ys.array(); };
    };
    s.freeze_b = [](CVecRef) -> BatchFn { return [](CMatRef ys, MatRef out) { out.array() = ys.array().cos(); }; };
    s.x0 = Vec::Constant(1, 0.5);
    s.y0 = Vec::Zero(1);
    m.A = Mat::Identity(1, 1);
    m.delta0 = 0.5;
    m.delta1 = 0.5;
    s.stability_cap = 0.1 / m.delta1;
    m.bounded_b = true;
    m.bounds = {1.0, 1.0, 1.0, 1.0, 1.0};
    // L y^2 = 1 + 2y(sin z - y) <= 2 - y^2;  L y^4 + y^4 <= sup(6y^2 + 4|y|^3 - 3y^4) ~ 12.09.
    m.beta0 = {2.0, 12.5};
    m.beta1 = {1.0, 1.0};
    m.oracle.frozen_law = [](CVecRef z, double h) {
        return GaussianLaw(Vec::Constant(1, std::sin(z(0))), Mat::Constant(1, 1, 1.0 / (2.0 - h)));
    };
    m.oracle.averaged_drift = [](CVecRef x, double h) {
        const double v = 1.0 / (2.0 - h);
        return Vec::Constant(1, std::exp(-0.5 * v) * std::cos(std::sin(x(0))));
    };
    return m;
}

BuiltinModel make_lingauss() {
    BuiltinModel m;
    auto& s = m.spec;
    s.name = "LINGAUSS";
    s.p = s.q = 1;
    s.b = [](CVecRef, CVecRef y, VecRef out) { out(0) = y(0); };
    s.sigma = [](CVecRef, MatRef out) { out(0, 0) = 1.0; };
    s.h = [](CVecRef, CVecRef y, VecRef out) { out(0) = -y(0); };
    s.eta = [](CVecRef, CVecRef, MatRef out) { out(0, 0) = 1.0; };
    s.eta_depends_on_y = false;
    s.freeze_h = [](CVecRef) -> BatchFn { return [](CMatRef ys, MatRef out) { out = -ys; }; };
    s.freeze_b = [](CVecRef) -> BatchFn { return [](CMatRef ys, MatRef out) { out = ys; }; };
    s.x0 = Vec::Zero(1);
    s.y0 = Vec::Constant(1, 1.0);
    m.A = Mat::Identity(1, 1);
    m.delta0 = 0.0;
    m.delta1 = 1.0;
    s.stability_cap = 0.1 / m.delta1;
    m.bounded_b = false;
    m.bounds = {std::nullopt, 1.0, 0.0, 1.0, 1.0};
    // L y^2 = 1 - 2y^2;  L y^4 + 2y^4 = 6y^2 - 2y^4 <= 4.5.
    m.beta0 = {1.0, 4.5};
    m.beta1 = {2.0, 2.0};
    m.oracle.frozen_law = [](CVecRef, double h) {
        return GaussianLaw(Vec::Zero(1), Mat::Constant(1, 1, 1.0 / (2.0 - h)));
    };
    m.oracle.averaged_drift = [](CVecRef, double) { return Vec::Zero(1); };
    m.oracle.kalman = linear_gaussian_params(s);
    return m;
}

BuiltinModel make_ou2d() {
    BuiltinModel m;
    auto& s = m.spec;
    s.name = "OU2D";
    s.p = 1;
    s.q = 2;
    Mat K(2, 2);
    K << 1.0, 2.0, 0.0, 1.0;
    Mat eta = Mat::Zero(2, 2);
    eta(0, 0) = 1.0;
    eta(1, 1) = 0.7;
    auto centre = [](double z) { return Vec((Vec(2) << 0.5 * std::sin(z), 0.5 * std::cos(z)).finished()); };
    s.b = [](CVecRef, CVecRef y, VecRef out) { out(0) = std::sin(y(0)) + 0.5 * std::cos(y(1)); };
    s.sigma = [](CVecRef x, MatRef out) { out(0, 0) = 1.0 + 0.25 * std::sin(x(0)); };
    s.h = [K, centre](CVecRef x, CVecRef y, VecRef out) { out = -K * (y - centre(x(0))); };
    s.eta = [eta](CVecRef, CVecRef, MatRef out) { out = eta; };
    s.eta_depends_on_y = false;
    s.freeze_h = [K, centre](CVecRef x) -> BatchFn {
        const Vec c = centre(x(0));
        return [K, c](CMatRef ys, MatRef out) { out.noalias() = -K * (ys.colwise() - c); };
    };
    s.freeze_b = [](CVecRef) -> BatchFn {
        return [](CMatRef ys, MatRef out) {
            out.row(0) = ys.row(0).array().sin() + 0.5 * ys.row(1).array().cos();
        };
    };
    s.x0 = Vec::Constant(1, 0.3);
    s.y0 = Vec::Zero(2);

    // A solves K^T A + A K = I, so <-K y, A y> = -|y|^2 / 2.
    const Mat I2 = Mat::Identity(2, 2);
    const Mat lyap = Eigen::kroneckerProduct(I2, K.transpose()).eval() + Eigen::kroneckerProduct(K.transpose(), I2).eval();
    Vec vecA = lyap.fullPivLu().solve(Eigen::Map<const Vec>(I2.data(), 4));
    m.A = Eigen::Map<Mat>(vecA.data(), 2, 2);
    m.A = 0.5 * (m.A + m.A.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es(m.A);
    const double lam_max = es.eigenvalues().maxCoeff();
    m.delta1 = 1.0 / (4.0 * lam_max);
    // <h, A y> + delta1 <y, A y> <= -|y|^2/4 + |A K c(z)| |y| <= |A K c(z)|^2.
    double c2 = 0.0;
    for (int i = 0; i <= 2000; ++i) {
        const double z = 2.0 * std::numbers::pi * i / 2000.0;
        c2 = std::max(c2, (m.A * K * centre(z)).squaredNorm());
    }
    m.delta0 = 1.05 * c2;
    s.stability_cap = 0.1 / m.delta1;
    m.bounded_b = true;
    m.bounds = {1.5, 1.0, 0.5 * Eigen::JacobiSVD<Mat>(K).singularValues()(0) + 1e-9, std::nullopt, 0.49};
    m.beta1 = {2.0 * m.delta1, 2.0 * m.delta1};
    // L V = Tr(eta eta^T A) + 2 <h, A y> <= Tr(eta eta^T A) + 2 delta0 - 2 delta1 V.
    m.beta0[0] = (eta * eta.transpose() * m.A).trace() + 2.0 * m.delta0;
    SampleSpec region;
    region.y_radius = 10.0 * std::sqrt(m.delta0 / m.delta1);
    region.z_lo = 0.0;
    region.z_hi = 2.0 * std::numbers::pi;
    region.samples = 200000;
    m.beta0[1] = 1.25 * std::max(0.0, sampled_moment_drift(s, m.A, 2, m.beta1[1], region));

    auto stationary_cov = [K, eta](double h) {
        // Stationary covariance of y' = (I - hK) y + sqrt(h) eta xi, i.e.
        // (I (x) K + K (x) I - h K (x) K) vec(S) = vec(eta eta^T); h = 0 is the continuous limit.
        const Mat I = Mat::Identity(2, 2);
        const Mat op = Eigen::kroneckerProduct(I, K).eval() + Eigen::kroneckerProduct(K, I).eval() -
                       h * Eigen::kroneckerProduct(K, K).eval();
        const Mat Q = eta * eta.transpose();
        Vec v = op.fullPivLu().solve(Eigen::Map<const Vec>(Q.data(), 4));
        Mat S = Eigen::Map<Mat>(v.data(), 2, 2);
        return Mat(0.5 * (S + S.transpose()));
    };
    m.oracle.frozen_law = [centre, stationary_cov](CVecRef z, double h) {
        return GaussianLaw(centre(z(0)), stationary_cov(h));
    };
    m.oracle.averaged_drift = [centre, stationary_cov](CVecRef x, double h) {
        const Vec c = centre(x(0));
        const Mat S = stationary_cov(h);
        return Vec::Constant(1, std::sin(c(0)) * std::exp(-0.5 * S(0, 0)) +
                                    0.5 * std::cos(c(1)) * std::exp(-0.5 * S(1, 1)));
    };
    return m;
}

}  // namespace

BuiltinModel builtin(const std::string& name) {
    if (name == "SINCOS") return make_sincos();
    if (name == "LINGAUSS") return make_lingauss();
    if (name == "OU2D") return make_ou2d();
    throw ConfigError("unknown model '" + name + "' (known: SINCOS, LINGAUSS, OU2D)");
}

}  // namespace slowfast
