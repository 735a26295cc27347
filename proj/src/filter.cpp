#include "slowfast/filter.hpp"

#include "slowfast/io.hpp"
#include "slowfast/models.hpp"
#include "slowfast/sde.hpp"
#include "slowfast/stats.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

namespace slowfast {

double ParticleCloud::ess() const { return 1.0 / weights.squaredNorm(); }

Vec ParticleCloud::mean() const { return particles * weights; }

Vec ParticleCloud::variance() const {
    const Vec m = mean();
    return (particles.colwise() - m).array().square().matrix() * weights;
}

Mat InnovationPath::cumulative() const {
    Mat out = Mat::Zero(dI.rows() + 1, dI.cols());
    for (Eigen::Index k = 0; k < dI.rows(); ++k) out.row(k + 1) = out.row(k) + dI.row(k);
    return out;
}

Vec InnovationPath::quadratic_variation() const { return dI.array().square().colwise().sum().transpose(); }

namespace {

void systematic_resample(ParticleCloud& cloud, RngStream& rng, Mat& scratch) {
    const auto N = static_cast<Eigen::Index>(cloud.size());
    scratch.resize(cloud.particles.rows(), N);
    const double step = 1.0 / static_cast<double>(N);
    double u = rng.uniform() * step;
    double cum = cloud.weights(0);
    Eigen::Index i = 0;
    for (Eigen::Index j = 0; j < N; ++j) {
        while (u > cum && i < N - 1) cum += cloud.weights(++i);
        scratch.col(j) = cloud.particles.col(i);
        u += step;
    }
    cloud.particles.swap(scratch);
    cloud.weights.setConstant(step);
}

}  // namespace

FilterTrace run_particle_filter(const ModelSpec& model, const PathBundle& path, const FilterConfig& cfg,
                                const RngStream& rng) {
    model.validate();
    const int p = model.p, q = model.q;
    const auto M = static_cast<Eigen::Index>(path.steps());
    if (path.X.rows() != M + 1 || path.X.cols() != p || path.Y.cols() != q)
        throw ConfigError("particle filter: path does not match the model dimensions");
    if (M < 1) throw ConfigError("particle filter: path has no steps");
    if (cfg.particles < 1) throw ConfigError("particle filter: need at least one particle");
    if (!(cfg.resample_threshold >= 0.0 && cfg.resample_threshold <= 1.0))
        throw ConfigError("particle filter: resample threshold must lie in [0, 1]");

    const auto N = static_cast<Eigen::Index>(cfg.particles);
    const auto F = static_cast<Eigen::Index>(cfg.observables.size());
    const double dt = path.dt();
    const double h_eff = path.n * dt / path.substeps;

    RngStream prop(rng.seed(), {rng.id().replica, Purpose::FilterPropagate, rng.id().index});
    RngStream res(rng.seed(), {rng.id().replica, Purpose::FilterResample, rng.id().index});

    FilterTrace tr;
    tr.t = path.grid;
    tr.ess.resize(M + 1);
    tr.mean.resize(M + 1, q);
    tr.var.resize(M + 1, q);
    tr.pi_b.resize(M + 1, p);
    tr.observed.resize(M + 1, F);
    tr.innovations.dI.resize(M, p);

    ParticleCloud cloud;
    cloud.particles = model.y0.replicate(1, N);
    cloud.weights = Vec::Constant(N, 1.0 / static_cast<double>(N));
    cloud.t = path.grid(0);

    Vec obs(N);
    auto record = [&](Eigen::Index k) {
        const Vec m = cloud.mean();
        tr.mean.row(k) = m.transpose();
        tr.var.row(k) = ((cloud.particles.colwise() - m).array().square().matrix() * cloud.weights).transpose();
        for (Eigen::Index f = 0; f < F; ++f) {
            cfg.observables[static_cast<std::size_t>(f)](cloud.particles, obs);
            tr.observed(k, f) = obs.dot(cloud.weights);
        }
        if (cfg.keep_clouds) tr.clouds.push_back(cloud);
    };
    tr.ess(0) = static_cast<double>(N);
    record(0);

    Mat bvals(p, N), resid(p, N), scratch;
    Mat sig(p, p);
    Vec logw(N);
    const double log_floor = std::log(1e-300);
    for (Eigen::Index k = 0; k < M; ++k) {
        const Vec x = path.X.row(k).transpose();
        const Vec dX = (path.X.row(k + 1) - path.X.row(k)).transpose();
        frozen_slow_drift(model, x)(cloud.particles, bvals);
        const Vec pib = bvals * cloud.weights;
        tr.pi_b.row(k) = pib.transpose();

        model.sigma(x, sig);
        Eigen::FullPivLU<Mat> lu(sig);
        if (!lu.isInvertible()) throw ConfigError("particle filter: sigma is singular at step " + std::to_string(k));
        // Innovation increment from the pre-resampling cloud.
        tr.innovations.dI.row(k) = lu.solve(dX - pib * dt).transpose();

        resid = (-dt * bvals).colwise() + dX;
        const Mat u = lu.solve(resid);
        // Collapse is judged on the normalized Gaussian density, not on relative weights.
        const double log_norm = -0.5 * p * std::log(2.0 * std::numbers::pi * dt) -
                                std::log(std::abs(lu.determinant()));
        logw = cloud.weights.array().log() - u.colwise().squaredNorm().transpose().array() / (2.0 * dt);
        const double mx = logw.maxCoeff();
        if (!std::isfinite(mx) || mx + log_norm < log_floor)
            throw FilterDegeneracyError("particle filter: all weights collapsed", static_cast<std::size_t>(k + 1));
        cloud.weights = (logw.array() - mx).exp().matrix();
        cloud.weights /= cloud.weights.sum();
        tr.ess(k + 1) = cloud.ess();
        if (tr.ess(k + 1) < cfg.resample_threshold * static_cast<double>(N)) {
            systematic_resample(cloud, res, scratch);
            ++tr.resamples;
        }

        FastStepper stepper(model, x, h_eff);
        stepper.advance(cloud.particles, static_cast<std::size_t>(path.substeps), prop);
        if (!cloud.particles.allFinite())
            throw DivergenceError("particle filter: particle cloud diverged", static_cast<std::size_t>(k + 1));
        cloud.t = path.grid(k + 1);
        record(k + 1);
    }
    frozen_slow_drift(model, path.X.row(M).transpose())(cloud.particles, bvals);
    tr.pi_b.row(M) = (bvals * cloud.weights).transpose();
    return tr;
}

std::vector<KalmanState> kalman_bucy_oracle(const ModelSpec& model, const PathBundle& path) {
    const LinearGaussianParams lg = linear_gaussian_params(model);
    const double n = path.n;
    const double alpha = n * lg.eta * lg.eta;
    const double beta = n * lg.a;
    const double gamma = lg.c * lg.c / (lg.sigma * lg.sigma);
    const double D = std::sqrt(beta * beta + alpha * gamma);
    const double p_plus = gamma > 0.0 ? (beta + D) / gamma : 0.0;

    // Exact flow of dP/dt = alpha + 2 beta P - gamma P^2 over time s.
    auto riccati = [&](double P, double s) {
        if (gamma == 0.0) {
            if (beta == 0.0) return P + alpha * s;
            const double e = std::exp(2.0 * beta * s);
            return e * P + alpha * (e - 1.0) / (2.0 * beta);
        }
        const double u0 = P - p_plus;
        if (D == 0.0) return p_plus + u0 / (1.0 + gamma * u0 * s);
        const double e = std::exp(-2.0 * D * s);
        return p_plus + u0 * e / (1.0 + gamma * u0 * (1.0 - e) / (2.0 * D));
    };

    const auto M = static_cast<Eigen::Index>(path.steps());
    std::vector<KalmanState> out;
    out.reserve(static_cast<std::size_t>(M + 1));
    double m = model.y0(0), P = 0.0;
    out.push_back({path.grid(0), m, P});
    for (Eigen::Index k = 0; k < M; ++k) {
        const double dt = path.grid(k + 1) - path.grid(k);
        const double x = path.X(k, 0);
        const double dX = path.X(k + 1, 0) - x;
        const double gain = P * lg.c / (lg.sigma * lg.sigma);
        m += n * (lg.a * m + lg.g(x)) * dt + gain * (dX - (lg.c * m + lg.d(x)) * dt);
        P = riccati(P, dt);
        out.push_back({path.grid(k + 1), m, P});
    }
    return out;
}

Estimate filter_expectation(const ParticleCloud& cloud, const ScalarFn& f) {
    std::vector<double> vals(cloud.size()), ws(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        vals[i] = f(cloud.particles.col(static_cast<Eigen::Index>(i)));
        ws[i] = cloud.weights(static_cast<Eigen::Index>(i));
    }
    return weighted_mean_se(vals, ws);
}

void write_filter_trace_csv(std::ostream& os, const FilterTrace& trace) {
    const auto q = trace.mean.cols();
    const auto p = trace.innovations.dI.cols();
    os << "t,ESS";
    for (Eigen::Index i = 0; i < q; ++i) os << ",mean_" << (i + 1);
    for (Eigen::Index i = 0; i < q; ++i) os << ",var_" << (i + 1);
    for (Eigen::Index i = 0; i < p; ++i) os << ",dI_" << (i + 1);
    os << '\n';
    const auto M = trace.innovations.dI.rows();
    for (Eigen::Index k = 0; k < trace.t.size(); ++k) {
        os << format_double(trace.t(k)) << ',' << format_double(trace.ess(k));
        for (Eigen::Index i = 0; i < q; ++i) os << ',' << format_double(trace.mean(k, i));
        for (Eigen::Index i = 0; i < q; ++i) os << ',' << format_double(trace.var(k, i));
        for (Eigen::Index i = 0; i < p; ++i) os << ',' << (k < M ? format_double(trace.innovations.dI(k, i)) : "");
        os << '\n';
    }
}

}  // namespace slowfast
