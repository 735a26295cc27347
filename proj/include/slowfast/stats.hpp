#pragma once

#include "slowfast/types.hpp"

#include <span>
#include <vector>

namespace slowfast {

/// Compensated (Neumaier) summation; the result does not depend on thread layout
/// as long as terms are added in a fixed order.
class NeumaierSum {
public:
    void add(double x) noexcept;
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Sample mean with standard error sd / sqrt(N).
Estimate mean_se(std::span<const double> xs);

/// Batch-means estimate with ceil(sqrt(N)) batches (or `batches` when positive).
Estimate batch_means(std::span<const double> xs, std::size_t batches = 0);

/// Weighted mean with standard error sqrt(sum w_i^2 (x_i - m)^2); weights must sum to 1.
Estimate weighted_mean_se(std::span<const double> xs, std::span<const double> ws);

double normal_cdf(double x);

/// Asymptotic Kolmogorov survival function P(K > lambda).
double kolmogorov_survival(double lambda);

struct KsResult {
    double statistic = 0.0;
    double p_value = 0.0;
};

/// One-sample Kolmogorov-Smirnov test against N(mean, sd^2).
KsResult ks_test_normal(std::span<const double> xs, double mean = 0.0, double sd = 1.0);

/// Two-sample Kolmogorov-Smirnov test.
KsResult ks_test_two_sample(std::span<const double> a, std::span<const double> b);

/// Energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| between two 1-D samples (O(n log n)).
double energy_distance_1d(std::span<const double> a, std::span<const double> b);

/// Permutation p-value for the energy distance between two 1-D samples.
double energy_test_1d(std::span<const double> a, std::span<const double> b, std::size_t permutations,
                      std::uint64_t seed);

/// Sample Pearson correlation.
double correlation(std::span<const double> a, std::span<const double> b);

}  // namespace slowfast
