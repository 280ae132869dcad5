#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <string>
#include <utility>

#include "mte/basis.hpp"
#include "mte/data.hpp"
#include "mte/inference.hpp"
#include "mte/weights.hpp"

namespace mte {

struct MlcOptions {
    double a = 0.05;       ///< weight on the AR component
    double kappa = 1e-6;   ///< scale of the gradient perturbation
    double alpha = 0.05;
    double r = 0.5;        ///< split of the estimated-weight correction between arms
    bool estimated_weights = false;
    std::uint64_t seed = 0;           ///< seeds xi and optimizer starts
    int quantile_draws = 200000;
    std::uint64_t quantile_seed = 0;
    /// Half-width of the box for the efficient (Wald) estimator; 0 uses the model box.
    double wald_bound = 0.0;
};

/// Multi-start Nelder-Mead budget.
struct OptSpec {
    int starts = 8;
    long max_evals = 2000;  ///< per start
    double tol = 1e-8;
    /// Stop as soon as a value at or below this is found (only the test decision is needed).
    double stop_below = -std::numeric_limits<double>::infinity();
};

/**
 * @brief Everything a profiled MLC test needs, fixed for one test invocation.
 *
 * xi is drawn once from the seed and shared by every theta probe and every lambda of a
 * confidence-set inversion.
 */
struct MlcContext {
    MteSpec spec;
    CellStats stats;
    CovarianceSet cov;
    WeightVector weight;
    MlcOptions options;

    Eigen::MatrixXd xi;        ///< 2(K+1) x 2(M+1) standard normal draws
    Eigen::MatrixXd A;         ///< design at p_hat
    Eigen::VectorXd beta;      ///< (beta1_hat', beta0_hat')'
    Eigen::MatrixXd sigma_beta;
    Eigen::MatrixXd dlam1;     ///< (K+1) x (M+1): lambda'_1m(p_l)
    Eigen::MatrixXd dlam0;
    Eigen::VectorXd xi_r;      ///< (-r 1', (1-r) 1')'
    Eigen::MatrixXd dc_p;      ///< 2(M+1) x (K+1) Jacobian of c (estimated weights)
    Eigen::MatrixXd dc_q;

    static MlcContext make(const MteSpec& spec, const CellStats& stats, const WeightVector& weight,
                           const MlcOptions& options = {});

    int K() const { return stats.K(); }
    double n() const { return static_cast<double>(stats.n); }
};

Eigen::MatrixXd omega_hat(const MlcContext& ctx, const Eigen::VectorXd& theta);
Eigen::MatrixXd d_tilde(const MlcContext& ctx, const Eigen::VectorXd& theta);

struct MlcParts {
    double mrlm = 0.0;
    double ar = 0.0;
    double mlc = 0.0;
};
MlcParts mlc_parts(const MlcContext& ctx, const Eigen::VectorXd& theta, const Eigen::VectorXd& c);
double mlc_stat(const MlcContext& ctx, const Eigen::VectorXd& theta, const WeightVector& weight);

/**
 * @brief 1-alpha quantile of (1+a) X + a Y with X ~ chi2(1), Y ~ chi2(2K+1) independent.
 *
 * Simulated from `draws` seeded samples and cached in memory (and on disk when a cache
 * directory is set). *low_draws is set when draws < 10000.
 */
double mixture_quantile(double a, int K, double alpha, int draws = 200000, std::uint64_t seed = 0,
                        bool* low_draws = nullptr);
void set_quantile_cache_dir(const std::string& dir);

/// [min, max] of c'theta over the parameter box.
std::pair<double, double> weight_range(const MteSpec& spec, const Eigen::VectorXd& c);

/// Euclidean projection of x onto {theta : c'theta = lambda} within the parameter box.
Eigen::VectorXd project_slice(const MteSpec& spec, const Eigen::VectorXd& c, double lambda, const Eigen::VectorXd& x);

struct ProfiledResult {
    double inf_value = std::numeric_limits<double>::infinity();
    Eigen::VectorXd minimizer_theta;
    bool converged = false;
    bool feasible = true;  ///< false: lambda outside {c'theta}, the test rejects automatically
    long evaluations = 0;
};

ProfiledResult profile_mlc(const MlcContext& ctx, double lambda, const OptSpec& opt = {},
                           const Eigen::VectorXd* warm_start = nullptr);

struct MlcTestResult {
    TestResult test;
    ProfiledResult profile;
};
MlcTestResult mlc_test(const MlcContext& ctx, double lambda, const OptSpec& opt = {},
                       const Eigen::VectorXd* warm_start = nullptr);

/// Continuously-updated minimum-distance estimate over the parameter box.
struct EfficientFit {
    Eigen::VectorXd theta;
    double objective = 0.0;
    bool converged = false;
    long evaluations = 0;
    double estimate = 0.0;   ///< c'theta
    double variance = 0.0;   ///< c'(A' Omega^{-1} A)^{-1} c, +inf when singular
    bool singular = false;
};
EfficientFit efficient_estimate(const MlcContext& ctx, const OptSpec& opt = {});

TestResult classical_wald(const MlcContext& ctx, double lambda, const EfficientFit& fit);
TestResult classical_wald(const MlcContext& ctx, double lambda);

/// Wald confidence interval estimate +- sqrt(q variance / n); infinite when singular.
std::pair<double, double> wald_interval(const MlcContext& ctx, const EfficientFit& fit);

/// AR weight a(gamma) equating the (1-alpha-gamma) mixture quantile with the chi2(1) critical value.
double pretest_weight(int K, double alpha, double gamma, int draws = 200000, std::uint64_t seed = 0);

struct PretestResult {
    bool weak = false;
    double a_gamma = 0.0;
    ConfidenceSet robust_set;
    std::pair<double, double> wald_set;
};
PretestResult pretest_ics(const MlcContext& ctx, double gamma, const OptSpec& opt = {}, int points = 101,
                          int threads = 1);

/// MLC confidence set: grid around the efficient estimate, restricted to the feasible range of c'theta.
ConfidenceSet mlc_confidence_set(const MlcContext& ctx, const OptSpec& opt = {}, int points = 101, int threads = 1,
                                 double critical_value = std::numeric_limits<double>::quiet_NaN());

}  // namespace mte
