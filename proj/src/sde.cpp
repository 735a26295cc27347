#include "slowfast/sde.hpp"

#include "slowfast/io.hpp"

#include <cmath>
#include <ostream>

namespace slowfast {

namespace {

bool all_finite(const Eigen::Ref<const Eigen::RowVectorXd>& row) { return row.allFinite(); }

}  // namespace

FastStepper::FastStepper(const ModelSpec& model, CVecRef z, double step)
    : model_(&model), z_(z), step_(step), sqrt_step_(std::sqrt(step)), drift_(frozen_fast_drift(model, z)) {
    if (!model.eta_depends_on_y) {
        eta_const_.resize(model.q, model.q);
        model.eta(z_, Vec::Zero(model.q), eta_const_);
    }
    eta_buf_.resize(model.q, model.q);
}

void FastStepper::step(MatRef ys, CMatRef xi) {
    const auto q = ys.rows();
    const auto cols = ys.cols();
    drift_buf_.resize(q, cols);
    drift_(ys, drift_buf_);
    if (!model_->eta_depends_on_y) {
        if (q == 1) {
            const double e = sqrt_step_ * eta_const_(0, 0);
            ys.array() += step_ * drift_buf_.array() + e * xi.array();
        } else {
            noise_buf_.noalias() = eta_const_ * xi;
            ys += step_ * drift_buf_ + sqrt_step_ * noise_buf_;
        }
        return;
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
        model_->eta(z_, ys.col(j), eta_buf_);
        ys.col(j) += step_ * drift_buf_.col(j) + sqrt_step_ * (eta_buf_ * xi.col(j));
    }
}

void FastStepper::advance(MatRef ys, std::size_t count, RngStream& rng) {
    xi_buf_.resize(ys.rows(), ys.cols());
    for (std::size_t s = 0; s < count; ++s) {
        rng.fill_normal({xi_buf_.data(), static_cast<std::size_t>(xi_buf_.size())});
        step(ys, xi_buf_);
    }
}

PathBundle simulate_slow_fast(const ModelSpec& model, const SimConfig& cfg) {
    cfg.validate(model);
    const std::size_t M = cfg.steps();
    Increments inc;
    inc.dW.resize(static_cast<Eigen::Index>(M), model.p);
    inc.dB.resize(static_cast<Eigen::Index>(M * cfg.substeps), model.q);
    RngStream slow(cfg.seed, {cfg.replica_id, Purpose::SlowNoise, 0});
    RngStream fast(cfg.seed, {cfg.replica_id, Purpose::FastNoise, 0});
    const double sdt = std::sqrt(cfg.dt_slow);
    const double sdf = std::sqrt(cfg.fast_step());
    // Row-major draw order: increment k, then component.
    for (Eigen::Index k = 0; k < inc.dW.rows(); ++k)
        for (Eigen::Index i = 0; i < inc.dW.cols(); ++i) inc.dW(k, i) = sdt * slow.normal();
    for (Eigen::Index k = 0; k < inc.dB.rows(); ++k)
        for (Eigen::Index i = 0; i < inc.dB.cols(); ++i) inc.dB(k, i) = sdf * fast.normal();
    return simulate_slow_fast(model, cfg, inc);
}

PathBundle simulate_slow_fast(const ModelSpec& model, const SimConfig& cfg, const Increments& inc) {
    cfg.validate(model);
    const std::size_t M = cfg.steps();
    const auto Mi = static_cast<Eigen::Index>(M);
    if (inc.dW.rows() != Mi || inc.dW.cols() != model.p || inc.dB.rows() != Mi * cfg.substeps ||
        inc.dB.cols() != model.q)
        throw ConfigError("increment set does not match the configuration grid");

    PathBundle out;
    out.n = cfg.n;
    out.substeps = cfg.substeps;
    out.grid.resize(Mi + 1);
    for (Eigen::Index k = 0; k <= Mi; ++k) out.grid(k) = static_cast<double>(k) * cfg.dt_slow;
    out.X.resize(Mi + 1, model.p);
    out.Y.resize(Mi + 1, model.q);
    out.X.row(0) = model.x0.transpose();
    out.Y.row(0) = model.y0.transpose();
    out.inc = inc;

    const double dt = cfg.dt_slow;
    const double sdf = std::sqrt(cfg.fast_step());
    Vec x = model.x0, y = model.y0, bx(model.p);
    Mat sig(model.p, model.p);
    Mat ycol(model.q, 1), xi(model.q, 1);
    for (Eigen::Index k = 0; k < Mi; ++k) {
        model.b(x, y, bx);
        model.sigma(x, sig);
        // The fast chain sees the slow state at the left endpoint of the step.
        FastStepper stepper(model, x, cfg.effective_fast_step());
        ycol.col(0) = y;
        for (int s = 0; s < cfg.substeps; ++s) {
            xi.col(0) = inc.dB.row(k * cfg.substeps + s).transpose() / sdf;
            stepper.step(ycol, xi);
        }
        x += bx * dt + sig * inc.dW.row(k).transpose();
        y = ycol.col(0);
        out.X.row(k + 1) = x.transpose();
        out.Y.row(k + 1) = y.transpose();
        if (!all_finite(out.X.row(k + 1)) || !all_finite(out.Y.row(k + 1)))
            throw DivergenceError("slow-fast trajectory diverged", static_cast<std::size_t>(k + 1));
    }
    return out;
}

FrozenPath simulate_frozen(const ModelSpec& model, CVecRef z, CVecRef y_init, double horizon, double dt,
                           RngStream& rng) {
    model.validate();
    if (z.size() != model.p || y_init.size() != model.q) throw ConfigError("frozen simulation: dimension mismatch");
    if (!(horizon > 0.0) || !(dt > 0.0)) throw ConfigError("frozen simulation: horizon and dt must be positive");
    if (model.stability_cap && dt > *model.stability_cap)
        throw ConfigError("frozen simulation: dt exceeds the model stability cap");
    const auto K = static_cast<Eigen::Index>(std::llround(horizon / dt));
    FrozenPath out;
    out.t.resize(K + 1);
    out.Y.resize(K + 1, model.q);
    FastStepper stepper(model, z, dt);
    Mat y = y_init;
    out.t(0) = 0.0;
    out.Y.row(0) = y.col(0).transpose();
    for (Eigen::Index k = 1; k <= K; ++k) {
        stepper.advance(y, 1, rng);
        if (!y.allFinite()) throw DivergenceError("frozen trajectory diverged", static_cast<std::size_t>(k));
        out.t(k) = static_cast<double>(k) * dt;
        out.Y.row(k) = y.col(0).transpose();
    }
    return out;
}

Mat reconstruct_slow_from_innovations(const ModelSpec& model, const PathBundle& path, CMatRef pi_hat_b,
                                      CMatRef dI) {
    const auto M = static_cast<Eigen::Index>(path.steps());
    if (pi_hat_b.rows() != M || dI.rows() != M || pi_hat_b.cols() != model.p || dI.cols() != model.p)
        throw ConfigError("reconstruction: grid length mismatch between path, filter drift and innovations");
    Mat out(M + 1, model.p);
    out.row(0) = model.x0.transpose();
    Mat sig(model.p, model.p);
    Vec acc = model.x0;
    for (Eigen::Index k = 0; k < M; ++k) {
        const double dt = path.grid(k + 1) - path.grid(k);
        model.sigma(path.X.row(k).transpose(), sig);
        acc += pi_hat_b.row(k).transpose() * dt + sig * dI.row(k).transpose();
        out.row(k + 1) = acc.transpose();
    }
    return out;
}

void write_path_csv(std::ostream& os, const PathBundle& path) {
    os << "t";
    for (Eigen::Index i = 0; i < path.X.cols(); ++i) os << ",X_" << (i + 1);
    for (Eigen::Index i = 0; i < path.Y.cols(); ++i) os << ",Y_" << (i + 1);
    os << '\n';
    std::vector<double> row;
    for (Eigen::Index k = 0; k < path.grid.size(); ++k) {
        row.clear();
        row.push_back(path.grid(k));
        for (Eigen::Index i = 0; i < path.X.cols(); ++i) row.push_back(path.X(k, i));
        for (Eigen::Index i = 0; i < path.Y.cols(); ++i) row.push_back(path.Y(k, i));
        os << csv_row(row);
    }
}

void write_increments_csv(std::ostream& slow, std::ostream& fast, const PathBundle& path) {
    slow << "k";
    for (Eigen::Index i = 0; i < path.inc.dW.cols(); ++i) slow << ",dW_" << (i + 1);
    slow << '\n';
    for (Eigen::Index k = 0; k < path.inc.dW.rows(); ++k) {
        std::vector<double> row{static_cast<double>(k)};
        for (Eigen::Index i = 0; i < path.inc.dW.cols(); ++i) row.push_back(path.inc.dW(k, i));
        slow << csv_row(row);
    }
    fast << "j";
    for (Eigen::Index i = 0; i < path.inc.dB.cols(); ++i) fast << ",dB_" << (i + 1);
    fast << '\n';
    for (Eigen::Index k = 0; k < path.inc.dB.rows(); ++k) {
        std::vector<double> row{static_cast<double>(k)};
        for (Eigen::Index i = 0; i < path.inc.dB.cols(); ++i) row.push_back(path.inc.dB(k, i));
        fast << csv_row(row);
    }
}

}  // namespace slowfast
