#include "slowfast/weighted.hpp"

#include "slowfast/rng.hpp"

#include <cmath>

namespace slowfast {

WeightedFn::WeightedFn(std::string id, ScalarFn f, std::function<Vec(CVecRef)> grad, BatchObservable batch)
    : id_(std::move(id)), f_(std::move(f)), grad_(std::move(grad)), batch_(std::move(batch)) {
    if (!f_) throw ConfigError("weighted function '" + id_ + "' has no evaluator");
}

Vec WeightedFn::gradient(CVecRef y) const {
    if (grad_) return scale_ * grad_(y);
    constexpr double h = 1e-5;
    Vec g(y.size());
    Vec yp = y, ym = y;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        yp(i) = y(i) + h;
        ym(i) = y(i) - h;
        g(i) = (f_(yp) - f_(ym)) / (2.0 * h);
        yp(i) = ym(i) = y(i);
    }
    return scale_ * g;
}

void WeightedFn::eval_batch(CMatRef ys, VecRef out) const {
    if (batch_) {
        batch_(ys, out);
        if (scale_ != 1.0) out *= scale_;
        return;
    }
    for (Eigen::Index j = 0; j < ys.cols(); ++j) out(j) = scale_ * f_(ys.col(j));
}

BatchObservable WeightedFn::as_batch() const {
    return [self = *this](CMatRef ys, VecRef out) { self.eval_batch(ys, out); };
}

ScalarFn WeightedFn::as_scalar() const {
    return [self = *this](CVecRef y) { return self(y); };
}

WeightedFn WeightedFn::scaled(double c) const {
    WeightedFn out = *this;
    out.scale_ = scale_ * c;
    return out;
}

Mat norm_sample_points(int q, const NormRegion& region) {
    if (q == 1) {
        const auto n = static_cast<Eigen::Index>(std::max<std::size_t>(region.points, 2) | 1);  // odd: keeps 0
        return Vec::LinSpaced(n, -region.radius, region.radius).transpose();
    }
    Mat pts(q, static_cast<Eigen::Index>(region.points) + 1);
    pts.col(0).setZero();
    RngStream rng(region.seed, {0, Purpose::Generic, 77});
    for (Eigen::Index j = 1; j < pts.cols(); ++j) {
        Vec d(q);
        for (int i = 0; i < q; ++i) d(i) = rng.normal();
        const double r = region.radius * std::pow(rng.uniform(), 1.0 / q);
        pts.col(j) = r * d / d.norm();
    }
    return pts;
}

WeightedNorms WeightedFn::raw_norms(const Mat& A, const NormRegion& region) const {
    const Mat pts = norm_sample_points(static_cast<int>(A.rows()), region);
    WeightedFn raw = *this;
    raw.scale_ = 1.0;
    WeightedNorms out;
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
        const Vec y = pts.col(j);
        const double w = 1.0 + y.dot(A * y);
        out.value = std::max(out.value, std::abs(f_(y)) / w);
        out.grad = std::max(out.grad, raw.gradient(y).norm() / w);
    }
    return out;
}

WeightedNorms WeightedFn::norms(const Mat& A, const NormRegion& region) const {
    const WeightedNorms r = raw_norms(A, region);
    const double c = std::abs(scale_);
    return {c * r.value, c * r.grad};
}

WeightedFn WeightedFn::normalized(const Mat& A, const NormRegion& region) const {
    const WeightedNorms r = norms(A, region);
    const double m = std::max(r.value, r.grad);
    if (m == 0.0) return *this;
    return scaled(1.0 / m);
}

bool WeightedFn::in_unit_class(const Mat& A, const NormRegion& region, double tol) const {
    const WeightedNorms r = norms(A, region);
    return r.value <= 1.0 + tol && r.grad <= 1.0 + tol;
}

}  // namespace slowfast
