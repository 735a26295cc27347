#include "slowfast/poisson.hpp"

#include "slowfast/parallel.hpp"
#include "slowfast/sde.hpp"
#include "slowfast/stats.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>

namespace slowfast {

void PoissonParams::validate() const {
    if (!(epsilon > 0.0) || !(lambda > 0.0)) throw ConfigError("Poisson parameters: epsilon and lambda must be positive");
    if (outer < 2 || inner < 1) throw ConfigError("Poisson parameters: need outer >= 2 and inner >= 1");
    if (!(dt > 0.0)) throw ConfigError("Poisson parameters: dt must be positive");
}

double PoissonParams::contraction_factor(double C, double xi) const {
    const double lx = lambda + xi;
    const double e = std::exp(-lx);
    const double a = std::max(1.0 / lx, (1.0 - std::exp(-lambda)) / lambda + e / lx);
    const double se = std::sqrt(epsilon);
    return C * lambda * a + C * epsilon * (1.0 / se + e / (se * lx));
}

Mat estimate_Vf_crn(const ModelSpec& model, const WeightedFn& f, const std::vector<Vec>& zs,
                    const std::vector<Vec>& ys, const PoissonParams& params, const InvariantLookup& lookup,
                    const RngStream& rng) {
    model.validate();
    params.validate();
    if (zs.size() != ys.size() || zs.empty()) throw ConfigError("estimate_Vf: one z per y required");
    for (std::size_t j = 0; j < zs.size(); ++j)
        if (zs[j].size() != model.p || ys[j].size() != model.q) throw ConfigError("estimate_Vf: dimension mismatch");
    if (model.stability_cap && params.dt > *model.stability_cap)
        throw ConfigError("estimate_Vf: dt exceeds the model stability cap");

    const auto J = static_cast<Eigen::Index>(zs.size());
    const auto pairs = static_cast<Eigen::Index>((params.inner + 1) / 2);
    Mat out(static_cast<Eigen::Index>(params.outer), J);
    parallel_for(params.outer, params.workers, [&](std::size_t i) {
        RngStream s = rng.substream(static_cast<std::uint32_t>(i));
        const double t = -std::log(s.uniform_open()) / params.lambda;
        Vec xi_z(model.p);
        for (int a = 0; a < model.p; ++a) xi_z(a) = s.normal();
        const double spread = std::sqrt(2.0 * params.epsilon * t);
        const auto K = static_cast<std::size_t>(std::llround(t / params.dt));

        std::vector<FastStepper> steppers;
        std::vector<Mat> ens;
        Vec pis(J);
        steppers.reserve(static_cast<std::size_t>(J));
        for (Eigen::Index j = 0; j < J; ++j) {
            const Vec zbar = zs[static_cast<std::size_t>(j)] + spread * xi_z;
            pis(j) = lookup(zbar)->expect(f.as_scalar()).value;
            steppers.emplace_back(model, zbar, params.dt);
            ens.push_back(ys[static_cast<std::size_t>(j)].replicate(1, 2 * pairs));
        }
        Mat xi(model.q, 2 * pairs);
        for (std::size_t k = 0; k < K; ++k) {
            s.fill_normal({xi.data(), static_cast<std::size_t>(model.q * pairs)});
            xi.rightCols(pairs) = -xi.leftCols(pairs);
            for (Eigen::Index j = 0; j < J; ++j) steppers[static_cast<std::size_t>(j)].step(ens[static_cast<std::size_t>(j)], xi);
        }
        Vec fv(2 * pairs);
        for (Eigen::Index j = 0; j < J; ++j) {
            const Mat& Y = ens[static_cast<std::size_t>(j)];
            if (!Y.allFinite()) throw DivergenceError("estimate_Vf: frozen paths diverged", K);
            f.eval_batch(Y, fv);
            const double H = fv.mean() - pis(j);
            out(static_cast<Eigen::Index>(i), j) = -H / params.lambda;
        }
    });
    return out;
}

Estimate estimate_Vf(const ModelSpec& model, const WeightedFn& f, CVecRef z, CVecRef y, const PoissonParams& params,
                     const InvariantLookup& lookup, const RngStream& rng, std::optional<double> max_se) {
    const Mat v = estimate_Vf_crn(model, f, {Vec(z)}, {Vec(y)}, params, lookup, rng);
    std::vector<double> col(v.data(), v.data() + v.rows());
    const Estimate e = mean_se(col);
    if (max_se && e.se > *max_se)
        throw BudgetError("estimate_Vf: standard error " + std::to_string(e.se) + " exceeds requested " +
                          std::to_string(*max_se));
    return e;
}

namespace {

struct Stencil {
    std::vector<Vec> zs, ys;
    int p = 0, q = 0;
    double dz = 0.0, dy = 0.0;
};

Stencil build_stencil(CVecRef z, CVecRef y, const StencilSpec& spec) {
    Stencil s;
    s.p = static_cast<int>(z.size());
    s.q = static_cast<int>(y.size());
    s.dz = spec.z_step;
    s.dy = spec.y_step;
    auto add = [&](const Vec& zz, const Vec& yy) {
        s.zs.push_back(zz);
        s.ys.push_back(yy);
    };
    add(z, y);
    for (int i = 0; i < s.p; ++i) {
        Vec e = Vec::Zero(s.p);
        e(i) = s.dz;
        add(z + e, y);
        add(z - e, y);
    }
    for (int i = 0; i < s.q; ++i) {
        Vec e = Vec::Zero(s.q);
        e(i) = s.dy;
        add(z, y + e);
        add(z, y - e);
    }
    for (int i = 0; i < s.q; ++i)
        for (int j = i + 1; j < s.q; ++j) {
            Vec ei = Vec::Zero(s.q), ej = Vec::Zero(s.q);
            ei(i) = s.dy;
            ej(j) = s.dy;
            add(z, y + ei + ej);
            add(z, y + ei - ej);
            add(z, y - ei + ej);
            add(z, y - ei - ej);
        }
    return s;
}

/// eps Lap_z V + L^z V - lambda V at the centre, from stencil values ordered as in build_stencil.
double stencil_operator(const Stencil& s, const ModelSpec& model, CVecRef z, CVecRef y, const PoissonParams& params,
                        const std::vector<double>& v) {
    const double v0 = v[0];
    std::size_t idx = 1;
    double lap = 0.0;
    for (int i = 0; i < s.p; ++i, idx += 2) lap += (v[idx] - 2.0 * v0 + v[idx + 1]) / (s.dz * s.dz);
    Vec grad(s.q);
    Mat hess = Mat::Zero(s.q, s.q);
    for (int i = 0; i < s.q; ++i, idx += 2) {
        grad(i) = (v[idx] - v[idx + 1]) / (2.0 * s.dy);
        hess(i, i) = (v[idx] - 2.0 * v0 + v[idx + 1]) / (s.dy * s.dy);
    }
    for (int i = 0; i < s.q; ++i)
        for (int j = i + 1; j < s.q; ++j, idx += 4) {
            hess(i, j) = hess(j, i) = (v[idx] - v[idx + 1] - v[idx + 2] + v[idx + 3]) / (4.0 * s.dy * s.dy);
        }
    Vec hv(s.q);
    Mat eta(s.q, s.q);
    model.h(z, y, hv);
    model.eta(z, y, eta);
    const double gen = 0.5 * ((eta * eta.transpose()).array() * hess.array()).sum() + hv.dot(grad);
    return params.epsilon * lap + gen - params.lambda * v0;
}

std::string verdict_for(double residual, double uncertainty) {
    return std::abs(residual) <= 3.0 * uncertainty ? "pass" : "fail";
}

}  // namespace

ResidualReport check_poisson_residual(const ModelSpec& model, const WeightedFn& f, CVecRef z, CVecRef y,
                                      const PoissonParams& params, const Law& pi_z,
                                      const std::function<double(CVecRef, CVecRef)>& V, const StencilSpec& stencil) {
    model.validate();
    params.validate();
    const Stencil s = build_stencil(z, y, stencil);
    std::vector<double> v;
    double vmax = 0.0;
    for (std::size_t j = 0; j < s.zs.size(); ++j) {
        v.push_back(V(s.zs[j], s.ys[j]));
        vmax = std::max(vmax, std::abs(v.back()));
    }
    const Estimate pf = pi_z.expect(f.as_scalar());
    ResidualReport r;
    r.z = z;
    r.y = y;
    r.epsilon = params.epsilon;
    r.lambda = params.lambda;
    r.v_centre = {v[0], 0.0};
    r.residual = stencil_operator(s, model, z, y, params, v) - (f(y) - pf.value);
    Vec hv(model.q);
    Mat eta(model.q, model.q);
    model.h(z, y, hv);
    model.eta(z, y, eta);
    const double scale = params.epsilon * 4.0 * s.p / (s.dz * s.dz) +
                         (eta * eta.transpose()).cwiseAbs().sum() * 4.0 / (s.dy * s.dy) + hv.norm() / s.dy +
                         params.lambda + 1.0;
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() * (vmax + std::abs(f(y)) + 1.0) * scale;
    r.uncertainty = std::hypot(floor, pf.se);
    r.verdict = verdict_for(r.residual, r.uncertainty);
    return r;
}

ResidualReport check_poisson_residual(const ModelSpec& model, const WeightedFn& f, CVecRef z, CVecRef y,
                                      const PoissonParams& params, const InvariantLookup& lookup,
                                      const RngStream& rng, const StencilSpec& stencil) {
    const Stencil s = build_stencil(z, y, stencil);
    const Mat v = estimate_Vf_crn(model, f, s.zs, s.ys, params, lookup, rng);
    const Estimate pf = lookup(z)->expect(f.as_scalar());
    const double target = f(y) - pf.value;
    std::vector<double> res(static_cast<std::size_t>(v.rows())), centre(static_cast<std::size_t>(v.rows()));
    std::vector<double> row(static_cast<std::size_t>(v.cols()));
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        for (Eigen::Index j = 0; j < v.cols(); ++j) row[static_cast<std::size_t>(j)] = v(i, j);
        res[static_cast<std::size_t>(i)] = stencil_operator(s, model, z, y, params, row) - target;
        centre[static_cast<std::size_t>(i)] = v(i, 0);
    }
    const Estimate er = mean_se(res);
    ResidualReport r;
    r.z = z;
    r.y = y;
    r.epsilon = params.epsilon;
    r.lambda = params.lambda;
    r.v_centre = mean_se(centre);
    r.residual = er.value;
    r.uncertainty = std::hypot(er.se, pf.se);
    r.verdict = r.v_centre.se > stencil.max_point_se ? "inconclusive" : verdict_for(r.residual, r.uncertainty);
    return r;
}

std::string residual_report_json(const ResidualReport& report) {
    nlohmann::ordered_json j;
    j["z"] = std::vector<double>(report.z.data(), report.z.data() + report.z.size());
    j["y"] = std::vector<double>(report.y.data(), report.y.data() + report.y.size());
    j["epsilon"] = report.epsilon;
    j["lambda"] = report.lambda;
    j["residual"] = report.residual;
    j["uncertainty"] = report.uncertainty;
    j["verdict"] = report.verdict;
    return j.dump(2);
}

}  // namespace slowfast
