#include "slowfast/model.hpp"

#include "slowfast/io.hpp"

#include <cmath>

namespace slowfast {

void ModelSpec::validate() const {
    if (p <= 0 || q <= 0) throw ConfigError("model '" + name + "': dimensions must be positive");
    if (!b || !sigma || !h || !eta) throw ConfigError("model '" + name + "': missing coefficient callback");
    if (x0.size() != p) throw ConfigError("model '" + name + "': x0 has wrong dimension");
    if (y0.size() != q) throw ConfigError("model '" + name + "': y0 has wrong dimension");
    if (stability_cap && !(*stability_cap > 0.0)) throw ConfigError("model '" + name + "': stability cap must be positive");
}

BatchFn frozen_fast_drift(const ModelSpec& model, CVecRef z) {
    if (model.freeze_h) return model.freeze_h(z);
    Vec zc = z;
    return [&model, zc, tmp = Vec(model.q)](CMatRef ys, MatRef out) mutable {
        for (Eigen::Index j = 0; j < ys.cols(); ++j) {
            model.h(zc, ys.col(j), tmp);
            out.col(j) = tmp;
        }
    };
}

BatchFn frozen_slow_drift(const ModelSpec& model, CVecRef x) {
    if (model.freeze_b) return model.freeze_b(x);
    Vec xc = x;
    return [&model, xc, tmp = Vec(model.p)](CMatRef ys, MatRef out) mutable {
        for (Eigen::Index j = 0; j < ys.cols(); ++j) {
            model.b(xc, ys.col(j), tmp);
            out.col(j) = tmp;
        }
    };
}

std::size_t SimConfig::steps() const {
    const double m = T / dt_slow;
    const double r = std::round(m);
    if (r < 1.0 || std::abs(m - r) > 1e-9 * std::max(1.0, m))
        throw ConfigError("T must be a positive integer multiple of dt_slow");
    return static_cast<std::size_t>(r);
}

void SimConfig::validate(const ModelSpec& model) const {
    model.validate();
    if (n <= 0) throw ConfigError("n must be a positive integer");
    if (!(T > 0.0) || !(dt_slow > 0.0)) throw ConfigError("T and dt_slow must be strictly positive");
    if (substeps <= 0) throw ConfigError("substeps must be a positive integer");
    (void)steps();
    if (model.stability_cap && effective_fast_step() > *model.stability_cap)
        throw ConfigError("effective fast step n*dt_slow/substeps = " + format_double(effective_fast_step()) +
                          " exceeds the stability cap " + format_double(*model.stability_cap) + " of model '" +
                          model.name + "'");
}

}  // namespace slowfast
