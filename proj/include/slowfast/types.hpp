#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace slowfast {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVecRef = Eigen::Ref<const Vec>;
using VecRef = Eigen::Ref<Vec>;
using CMatRef = Eigen::Ref<const Mat>;
using MatRef = Eigen::Ref<Mat>;

/// Scalar function on R^q (test functions, weights, observables).
using ScalarFn = std::function<double(CVecRef)>;

/// Scalar function evaluated on the columns of a q x N block, writing N values.
using BatchObservable = std::function<void(CMatRef ys, VecRef out)>;

/// A Monte Carlo point estimate together with its standard error.
struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions, invalid parameters, unknown names.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A trajectory left the finite reals. `index` is the first bad slow-grid index.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t index)
        : Error(what + " (first non-finite index " + std::to_string(index) + ")"), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// All particle weights underflowed at slow step `step`.
class FilterDegeneracyError : public Error {
public:
    FilterDegeneracyError(const std::string& what, std::size_t step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// A regression had no usable data; never replaced by a fabricated value.
class FitError : public Error {
public:
    using Error::Error;
};

/// The Monte Carlo budget did not reach the requested precision.
class BudgetError : public Error {
public:
    using Error::Error;
};

}  // namespace slowfast
