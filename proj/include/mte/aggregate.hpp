#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "mte/inference.hpp"

namespace mte {

/// Confidence interval for one covariate cell.
struct CellCI {
    std::string w;
    double lo = 0.0;
    double hi = 0.0;
    double level = 0.95;
};

/// Per-cell level (1 - alpha)^(1/cells).
double sidak_level(double alpha, int cells);

/// [sum q lo, sum q hi] for known covariate mass q.
ConfidenceSet aggregate_known_mass(const std::vector<CellCI>& cells, const Eigen::VectorXd& mass);

/**
 * @brief Range of sum q(w) lambda(w) over q in the mass box intersected with the simplex and
 * lambda(w) in the cell intervals.
 *
 * Cells must be built at level (1 - alpha2)^(1/cells).
 */
ConfidenceSet aggregate_estimated_mass(const std::vector<CellCI>& cells,
                                       const std::vector<std::pair<double, double>>& mass_ci, double alpha2);

/// Simultaneous (Bonferroni) Wald box for cell shares at joint level 1 - alpha1, clipped to [0,1].
std::vector<std::pair<double, double>> mass_wald_box(const Eigen::VectorXd& q_hat, long n, double alpha1);

/// Minimum of coef'q over vertices of {q in box, sum q = 1}; the linear objective attains it at one.
double simplex_box_min(const Eigen::VectorXd& coef, const std::vector<std::pair<double, double>>& box);

}  // namespace mte
