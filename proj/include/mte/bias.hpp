#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>

#include "mte/montecarlo.hpp"

namespace mte {

/**
 * @brief Population moments for the short-regression bias formulas.
 *
 * `second[d]` is E[v v' | D = d] for v = (1, W', lambda_d(P), (W lambda_d(P))')'.
 */
struct BiasInputs {
    Eigen::VectorXd ew1;  ///< E[W | D = 1]
    Eigen::VectorXd ew0;  ///< E[W | D = 0]
    Eigen::VectorXd ew;   ///< E[W]
    double elam1 = 0.0;   ///< E[lambda_1(P) | D = 1]
    double elam0 = 0.0;   ///< E[lambda_0(P) | D = 0]
    double p1 = 0.5;      ///< P(D = 1)
    Eigen::VectorXd eta1;
    Eigen::VectorXd eta0;
    std::optional<std::array<Eigen::MatrixXd, 2>> second;

    int dim() const { return static_cast<int>(ew.size()); }
    void validate() const;
};

/// Short-regression coefficient errors in one arm.
struct ArmBias {
    double rho = 0.0;
    Eigen::VectorXd tau;
    double mu = 0.0;
};

ArmBias bias_general(const BiasInputs& in, int d);

struct EstimandBias {
    double ate = 0.0;
    double cate = 0.0;
    double slope = 0.0;
};

/// Closed forms valid when W is uncorrelated with lambda_d(P) given D = d.
EstimandBias bias_ate_cate_slope(const BiasInputs& in, const Eigen::VectorXd* w_point = nullptr);
/// Same estimand gaps assembled from bias_general.
EstimandBias bias_from_moments(const BiasInputs& in, const Eigen::VectorXd* w_point = nullptr);

/**
 * @brief Logit selection design with a binary covariate.
 *
 * W ~ Bernoulli(1/2), Z standard logistic, P = logistic(b W + Z), D = 1[U <= P],
 * Y_d = mu_d + (rho_d + delta W)(U - 1/2) + e_d with e ~ N(0, I). The true ATE is mu1 - mu0.
 */
struct SelectionDesign {
    double b = 0.0;
    double delta = 0.0;
    double mu1 = 0.5;
    double mu0 = 0.0;
    double rho1 = 1.0;
    double rho0 = -1.0;
};

/// Population moments by adaptive quadrature.
BiasInputs selection_design_moments(const SelectionDesign& design);

struct SelectionSample {
    Eigen::VectorXd w, p, d, y;
};
SelectionSample simulate_selection_design(const SelectionDesign& design, long n, std::uint64_t seed);
/// Moments estimated from a sample (lambda evaluated at the true propensity).
BiasInputs moments_from_sample(const SelectionSample& sample, const SelectionDesign& design);

struct SingularityReport {
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    double ratio = 0.0;
};

/**
 * @brief Eigenvalues of the sample covariance of the two-stage moment vector at the true
 * parameters of a linear-MTE DGP.
 *
 * With `reparameterized`, the outcome regressors are centred at the baseline level z_0.
 */
SingularityReport two_stage_singularity(const DgpSpec& dgp, bool reparameterized = false);

}  // namespace mte
