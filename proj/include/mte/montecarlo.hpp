#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mte/data.hpp"
#include "mte/mlc.hpp"
#include "mte/weights.hpp"

namespace mte {

/**
 * @brief Polynomial MTE data generator.
 *
 * Y_d = mu_d + sum_m rho_dm h_m(U) + e_d, D = 1[U <= p(Z)], e ~ N(0, error_var I).
 */
struct DgpSpec {
    int order = 1;
    double mu1 = 0.0;
    double mu0 = 0.0;
    Eigen::VectorXd rho1;
    Eigen::VectorXd rho0;
    double error_var = 0.5;
    Eigen::VectorXd p;
    Eigen::VectorXd q;  ///< empty means uniform over levels
    long n = 2000;
    std::uint64_t seed = 0;

    void validate() const;
    /// theta = (mu1, rho1', mu0, rho0')'
    Eigen::VectorXd theta() const;
    double ate() const { return mu1 - mu0; }
};

/// Quadratic design: mu = 0, rho1 = (-5, -5), rho0 = (5, 5), error variance 0.5, n = 2000.
DgpSpec quadratic_design(const Eigen::VectorXd& p, long n = 2000);
/// Linear design: mu = 0, rho1 = rho0 = 5, error variance 0.5, n = 500.
DgpSpec linear_design(const Eigen::VectorXd& p, long n = 500);

Dataset dgp_sample(const DgpSpec& spec);

enum class Method { AR, CWald, MLC, Wald };
std::string method_name(Method m);
Method parse_method(const std::string& name);

struct SweepOptions {
    std::vector<Method> methods{Method::MLC, Method::Wald};
    int reps = 500;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    int threads = 1;
    Target target;            ///< tested target; truth must be the DGP's value of c'theta
    MlcOptions mlc;           ///< a, kappa, r, quantile draws (alpha and seed are overridden)
    OptSpec opt;
    int draws = 2000;         ///< conditional Wald simulation draws
    int ar_k = -1;            ///< AR moment index; -1 means K
    std::string checkpoint;   ///< optional checkpoint file for resumable sweeps
    int max_points = -1;      ///< stop after this many new grid points (for staged runs)
    double theta_bound = 10.0;
    double wald_bound = 1000.0;  ///< box half-width for the Wald estimator
};

struct SweepRow {
    double x1 = 0.0;  ///< p(z1) or lambda
    double x2 = 0.0;  ///< p(z2); unused for power curves
    Method method = Method::MLC;
    double rate = 0.0;
    int reps = 0;
    double mc_se = 0.0;
};

struct SweepResult {
    std::string kind;  ///< "size" or "power"
    std::vector<SweepRow> rows;
    std::uint64_t seed = 0;
    bool complete = true;

    void write_csv(std::ostream& out) const;
    double rate(double x1, double x2, Method m) const;
    double rate(double lambda, Method m) const { return rate(lambda, 0.0, m); }
};

/// Rejection decisions of each method at each lambda for one dataset: out[l][m].
std::vector<std::vector<bool>> evaluate_methods(const CellStats& stats, int order, const std::vector<double>& lambdas,
                                                const SweepOptions& opt, std::uint64_t seed);

/// Size over a grid of (p(z1), p(z2)) with p(z0) taken from the base design; tests the true target value.
SweepResult size_surface(const DgpSpec& base, const std::vector<std::pair<double, double>>& grid,
                         const SweepOptions& opt);

/// Rejection rates of H0: target = lambda for each lambda on one design.
SweepResult power_curve(const DgpSpec& design, const std::vector<double>& lambdas, const SweepOptions& opt);

}  // namespace mte
