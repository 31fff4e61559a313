#ifndef COEVOLVE_COMMON_HPP_
#define COEVOLVE_COMMON_HPP_

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace coevolve {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Largest node count for which dense N x N intermediates (PPR, pairwise
/// similarity) are permitted.
inline constexpr int kDefaultDenseCap = 20000;

/// Invalid or inconsistent input data (files, datasets, empty eligible sets).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string &msg) : std::runtime_error(msg) {}
};

/// Numerical failure: divergence, non-finite values, singular systems.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string &msg) : std::runtime_error(msg) {}
    NumericalError(const std::string &msg, double residual)
        : std::runtime_error(msg), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_ = 0.0;
};

} // namespace coevolve

#endif // COEVOLVE_COMMON_HPP_
