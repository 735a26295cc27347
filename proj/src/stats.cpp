#include "slowfast/stats.hpp"

#include "slowfast/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace slowfast {

void NeumaierSum::add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
        comp_ += (sum_ - t) + x;
    else
        comp_ += (x - t) + sum_;
    sum_ = t;
}

Estimate mean_se(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n == 0) throw ConfigError("mean of an empty sample");
    NeumaierSum s;
    for (double x : xs) s.add(x);
    const double m = s.value() / static_cast<double>(n);
    if (n == 1) return {m, 0.0};
    NeumaierSum ss;
    for (double x : xs) ss.add((x - m) * (x - m));
    const double var = ss.value() / static_cast<double>(n - 1);
    return {m, std::sqrt(var / static_cast<double>(n))};
}

Estimate batch_means(std::span<const double> xs, std::size_t batches) {
    const std::size_t n = xs.size();
    if (n == 0) throw ConfigError("batch means of an empty sample");
    if (batches == 0) batches = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    batches = std::min(batches, n);
    if (batches < 2) return mean_se(xs);
    const std::size_t len = n / batches;
    std::vector<double> means;
    means.reserve(batches);
    for (std::size_t b = 0; b < batches; ++b) {
        NeumaierSum s;
        for (std::size_t i = b * len; i < (b + 1) * len; ++i) s.add(xs[i]);
        means.push_back(s.value() / static_cast<double>(len));
    }
    NeumaierSum all;
    for (double x : xs) all.add(x);
    const double m = all.value() / static_cast<double>(n);
    return {m, mean_se(means).se};
}

Estimate weighted_mean_se(std::span<const double> xs, std::span<const double> ws) {
    if (xs.size() != ws.size() || xs.empty()) throw ConfigError("weighted mean: size mismatch");
    NeumaierSum s;
    for (std::size_t i = 0; i < xs.size(); ++i) s.add(ws[i] * xs[i]);
    const double m = s.value();
    NeumaierSum v;
    for (std::size_t i = 0; i < xs.size(); ++i) v.add(ws[i] * ws[i] * (xs[i] - m) * (xs[i] - m));
    return {m, std::sqrt(v.value())};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double kolmogorov_survival(double lambda) {
    if (lambda <= 0.0) return 1.0;
    if (lambda < 0.3) return 1.0;  // series converges slowly; survival is 1 to many digits here
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        s += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-17) break;
    }
    return std::clamp(s, 0.0, 1.0);
}

KsResult ks_test_normal(std::span<const double> xs, double mean, double sd) {
    std::vector<double> v(xs.begin(), xs.end());
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double F = normal_cdf((v[i] - mean) / sd);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - F, F - static_cast<double>(i) / n});
    }
    const double sn = std::sqrt(n);
    return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

KsResult ks_test_two_sample(std::span<const double> a, std::span<const double> b) {
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double na = static_cast<double>(x.size()), nb = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double t = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= t) ++i;
        while (j < y.size() && y[j] <= t) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d)};
}

namespace {

/// Sum over all ordered pairs of |x_i - x_j| for sorted x, divided by n^2.
double mean_abs_within(const std::vector<double>& sorted) {
    const double n = static_cast<double>(sorted.size());
    NeumaierSum s;
    for (std::size_t i = 0; i < sorted.size(); ++i)
        s.add(sorted[i] * (2.0 * static_cast<double>(i) - n + 1.0));
    return 2.0 * s.value() / (n * n);
}

/// E|X - Y| over the product of two sorted samples.
double mean_abs_between(const std::vector<double>& x, const std::vector<double>& y) {
    // For each x_i: sum_j |x_i - y_j| = x_i (2k - m) - 2 prefix(k) + total, k = #{y_j < x_i}.
    std::vector<double> prefix(y.size() + 1, 0.0);
    for (std::size_t j = 0; j < y.size(); ++j) prefix[j + 1] = prefix[j] + y[j];
    const double m = static_cast<double>(y.size());
    NeumaierSum s;
    std::size_t k = 0;
    for (double xi : x) {
        while (k < y.size() && y[k] < xi) ++k;
        const double kd = static_cast<double>(k);
        s.add(xi * (2.0 * kd - m) - 2.0 * prefix[k] + prefix[y.size()]);
    }
    return s.value() / (static_cast<double>(x.size()) * m);
}

}  // namespace

double energy_distance_1d(std::span<const double> a, std::span<const double> b) {
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    return 2.0 * mean_abs_between(x, y) - mean_abs_within(x) - mean_abs_within(y);
}

double energy_test_1d(std::span<const double> a, std::span<const double> b, std::size_t permutations,
                      std::uint64_t seed) {
    const double observed = energy_distance_1d(a, b);
    std::vector<double> pool(a.begin(), a.end());
    pool.insert(pool.end(), b.begin(), b.end());
    RngStream rng(seed, {0, Purpose::Generic, 404});
    std::size_t exceed = 0;
    for (std::size_t r = 0; r < permutations; ++r) {
        for (std::size_t i = pool.size() - 1; i > 0; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i + 1));
            std::swap(pool[i], pool[std::min(j, i)]);
        }
        const std::span<const double> pa(pool.data(), a.size());
        const std::span<const double> pb(pool.data() + a.size(), b.size());
        if (energy_distance_1d(pa, pb) >= observed) ++exceed;
    }
    return (static_cast<double>(exceed) + 1.0) / (static_cast<double>(permutations) + 1.0);
}

double correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw ConfigError("correlation: size mismatch");
    const Estimate ma = mean_se(a), mb = mean_se(b);
    NeumaierSum sab, saa, sbb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma.value, db = b[i] - mb.value;
        sab.add(da * db);
        saa.add(da * da);
        sbb.add(db * db);
    }
    return sab.value() / std::sqrt(saa.value() * sbb.value());
}

}  // namespace slowfast
