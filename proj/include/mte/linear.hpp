#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "mte/data.hpp"
#include "mte/inference.hpp"
#include "mte/weights.hpp"

namespace mte {

/**
 * @brief Inputs of the linear-MTE (M = 1) moment g_k(lambda) = pi_k lambda - gamma_k.
 *
 * The weight is c = (c_mu, c_rho, -c_mu, -c_rho). With estimated weights the gradients of
 * (c_mu, c_rho) with respect to (p_hat, q_hat) enter the variance.
 */
struct LinearMomentContext {
    CellStats stats;
    CovarianceSet cov;
    double c_mu = 1.0;
    double c_rho = 0.0;
    bool estimated_weights = false;
    Eigen::VectorXd dc_mu_dp, dc_mu_dq, dc_rho_dp, dc_rho_dq;

    static LinearMomentContext make(const CellStats& stats, double c_mu, double c_rho);
    static LinearMomentContext make(const CellStats& stats, const WeightVector& weight, bool estimated_weights);

    int K() const { return stats.K(); }
    double n() const { return static_cast<double>(stats.n); }
};

/// Delta_mu(z_0, z_k) for k = 1..K (entry k-1).
Eigen::VectorXd delta_mu(const LinearMomentContext& ctx);
/// Delta_rho(z_0, z_k) for k = 1..K.
Eigen::VectorXd delta_rho(const LinearMomentContext& ctx);

double moment_g(const LinearMomentContext& ctx, int k, double lambda);
Eigen::VectorXd moment_vector(const LinearMomentContext& ctx, double lambda);
/// pi_k = p_hat(z_k) - p_hat(z_0)
Eigen::VectorXd moment_slope(const LinearMomentContext& ctx);

/// K x (K+1) Jacobians of g(lambda) with respect to p_hat, beta1_hat, beta0_hat and q_hat.
struct MomentJacobians {
    Eigen::MatrixXd wrt_p, wrt_beta1, wrt_beta0, wrt_q;
};
MomentJacobians moment_jacobians(const LinearMomentContext& ctx, double lambda);

/// Asymptotic variance S(lambda) of sqrt(n) g(lambda).
Eigen::MatrixXd moment_variance(const LinearMomentContext& ctx, double lambda);

TestResult ar_test(const LinearMomentContext& ctx, int k, double lambda, double alpha);

/// Statistic and conditioning vector of the conditional Wald test at lambda.
struct CondWaldPieces {
    Eigen::VectorXd g;      ///< g(lambda)
    Eigen::VectorXd pi;     ///< pi_hat
    Eigen::MatrixXd S;      ///< variance of sqrt(n) g
    Eigen::MatrixXd C;      ///< covariance of sqrt(n) pi_hat with sqrt(n) g
    Eigen::VectorXd h;      ///< sqrt(n) pi - C S^{-1} sqrt(n) g
    double statistic = 0.0;
};
CondWaldPieces cond_wald_pieces(const LinearMomentContext& ctx, double lambda);

/**
 * @brief Conditional Wald test with a simulated critical value.
 *
 * Draws depend only on `seed`, so calls sharing a seed use common random numbers across lambda.
 */
TestResult cond_wald_test(const LinearMomentContext& ctx, double lambda, double alpha, int draws = 2000,
                          std::uint64_t seed = 0);

/// Two-step efficient estimate of lambda and its classical standard error.
struct LinearEstimate {
    double estimate = 0.0;
    double se = 0.0;
};
LinearEstimate linear_point_estimate(const LinearMomentContext& ctx);

}  // namespace mte
