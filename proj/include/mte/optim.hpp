#pragma once

#include <Eigen/Dense>

#include <functional>
#include <limits>

namespace mte {

struct NelderMeadResult {
    Eigen::VectorXd x;
    double value = 0.0;
    long evaluations = 0;
    bool converged = false;
};

/**
 * @brief Unconstrained Nelder-Mead with adaptive coefficients.
 *
 * Stops when the spread of simplex values falls below `ftol` (absolute plus relative)
 * and the simplex diameter is below `xtol`, when `max_evals` is reached, or as soon as a value
 * at or below `stop_value` is found.
 */
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             double step, double ftol, long max_evals, double xtol = 1e-6,
                             double stop_value = -std::numeric_limits<double>::infinity());

}  // namespace mte
