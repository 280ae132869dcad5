#pragma once

#include <Eigen/Dense>

#include <string>

#include "mte/basis.hpp"
#include "mte/data.hpp"

namespace mte {

enum class PolicyKind { Additive, Proportional, Quota };

/// Counterfactual propensity shift p -> p^eps.
struct PolicySpec {
    PolicyKind kind = PolicyKind::Additive;
    double eps = 0.0;
    double eps_lo = 0.0;
    double eps_hi = 1.0;
    double phi = 30.0;

    void validate() const;
};

double counterfactual_propensity(const PolicySpec& policy, double p);
/// d p^eps / d p
double counterfactual_propensity_deriv(const PolicySpec& policy, double p);

enum class TargetKind {
    ATE,
    MTE,
    ATT,
    ATU,
    LATE,
    AdditivePRTE,
    ProportionalPRTE,
    Quota,
    AdditiveMPRTE,
    ProportionalMPRTE,
};

struct Target {
    TargetKind kind = TargetKind::ATE;
    double u = 0.5;  ///< MTE evaluation point
    int k = 1;       ///< LATE compares z_k with z_0
    PolicySpec policy;
    /// Optional user-supplied instrument mass replacing q_hat in population averages.
    Eigen::VectorXd mass;

    static Target ate() { return {}; }
    static Target mte(double u);
    static Target att();
    static Target atu();
    static Target late(int k);
    static Target additive_prte(double eps);
    static Target proportional_prte(double eps);
    static Target quota(double eps_lo, double eps_hi, double phi = 30.0);
    static Target additive_mprte();
    static Target proportional_mprte();

    std::string name() const;
    /// True when the weight depends on (p_hat, q_hat).
    bool estimated() const;
};

/// Parses ate, mte, att, atu, late, prte-add, prte-prop, quota, mprte-add, mprte-prop.
TargetKind parse_target_kind(const std::string& name);

/**
 * @brief Weight vector c = (c_1', -c_1')' with c_1 of length M+1.
 *
 * grad_p and grad_q hold the (M+1) x (K+1) Jacobians of c_1.
 */
struct WeightVector {
    Eigen::VectorXd c;
    Target target;
    Eigen::MatrixXd grad_p;
    Eigen::MatrixXd grad_q;

    Eigen::VectorXd c1() const { return c.head(c.size() / 2); }
};

/// c_1 evaluated at arbitrary (p, q); the building block for weight_vector.
Eigen::VectorXd weight_c1(const Target& target, int order, const Eigen::VectorXd& p, const Eigen::VectorXd& q);

struct WeightGradients {
    Eigen::MatrixXd grad_p;  ///< (M+1) x (K+1)
    Eigen::MatrixXd grad_q;  ///< (M+1) x (K+1)
};

WeightGradients weight_c1_gradients(const Target& target, int order, const Eigen::VectorXd& p,
                                    const Eigen::VectorXd& q);

WeightVector weight_vector(const Target& target, const MteSpec& spec, const CellStats& stats);
WeightGradients weight_gradients(const Target& target, const MteSpec& spec, const CellStats& stats);

}  // namespace mte
