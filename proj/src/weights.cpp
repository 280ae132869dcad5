#include "mte/weights.hpp"

#include <cmath>

#include "mte/error.hpp"

namespace mte {

namespace {

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Eigen::VectorXd population_mass(const Target& t, const Eigen::VectorXd& q) {
    if (t.mass.size() == 0) return q;
    if (t.mass.size() != q.size()) throw ConfigError("target mass has wrong length");
    return t.mass;
}

// c_1m = E[int_p^{p_eps} h_m] / E[p_eps - p] for a policy shift applied cell by cell.
struct PolicyPieces {
    Eigen::ArrayXd f;
    Eigen::ArrayXd df;
};

PolicyPieces policy_pieces(const PolicySpec& policy, const Eigen::VectorXd& p) {
    PolicyPieces pp{Eigen::ArrayXd(p.size()), Eigen::ArrayXd(p.size())};
    for (Eigen::Index l = 0; l < p.size(); ++l) {
        pp.f[l] = counterfactual_propensity(policy, p[l]);
        pp.df[l] = counterfactual_propensity_deriv(policy, p[l]);
    }
    return pp;
}

double policy_denominator(const Eigen::ArrayXd& q, const Eigen::ArrayXd& f, const Eigen::ArrayXd& p) {
    const double den = (q * (f - p)).sum();
    if (std::abs(den) < 1e-14) throw ConfigError("null policy: the policy leaves every propensity unchanged");
    return den;
}

void check_late(const Target& t, const Eigen::VectorXd& p) {
    if (t.k < 1 || t.k >= p.size()) throw ConfigError("LATE index k out of range");
    if (std::abs(p[t.k] - p[0]) <= 1e-8) throw DataError("degenerate complier group: p(z_k) equals p(z_0)");
}

}  // namespace

void PolicySpec::validate() const {
    switch (kind) {
        case PolicyKind::Additive:
        case PolicyKind::Proportional:
            if (!(eps >= 0.0)) throw ConfigError("policy epsilon must be nonnegative");
            break;
        case PolicyKind::Quota:
            if (!(0.0 <= eps_lo && eps_lo <= eps_hi && eps_hi <= 1.0))
                throw ConfigError("quota bounds must satisfy 0 <= eps_lo <= eps_hi <= 1");
            if (!(phi > 0.0)) throw ConfigError("quota smoothing phi must be positive");
            break;
    }
}

double counterfactual_propensity(const PolicySpec& policy, double p) {
    policy.validate();
    if (!(p > 0.0 && p < 1.0)) throw DataError("propensity score outside (0,1)");
    double out = 0.0;
    switch (policy.kind) {
        case PolicyKind::Additive:
            out = p + policy.eps;
            break;
        case PolicyKind::Proportional:
            out = (1.0 + policy.eps) * p;
            break;
        case PolicyKind::Quota: {
            // -(1/phi) log(1/(e^{phi p} + e^{phi lo}) + e^{-phi hi}), evaluated in log space.
            const double phi = policy.phi;
            const double inner = log_sum_exp(phi * p, phi * policy.eps_lo);
            out = -log_sum_exp(-inner, -phi * policy.eps_hi) / phi;
            break;
        }
    }
    if (!(out > 0.0 && out < 1.0)) throw DataError("counterfactual propensity out of range");
    return out;
}

double counterfactual_propensity_deriv(const PolicySpec& policy, double p) {
    switch (policy.kind) {
        case PolicyKind::Additive:
            return 1.0;
        case PolicyKind::Proportional:
            return 1.0 + policy.eps;
        case PolicyKind::Quota: {
            const double phi = policy.phi;
            const double a = sigmoid(phi * (p - policy.eps_lo));
            return a / (1.0 + std::exp(phi * (p - policy.eps_hi)) + std::exp(phi * (policy.eps_lo - policy.eps_hi)));
        }
    }
    return 0.0;
}

Target Target::mte(double u) {
    if (!(u >= 0.0 && u <= 1.0)) throw ConfigError("MTE evaluation point must lie in [0,1]");
    Target t;
    t.kind = TargetKind::MTE;
    t.u = u;
    return t;
}
Target Target::att() {
    Target t;
    t.kind = TargetKind::ATT;
    return t;
}
Target Target::atu() {
    Target t;
    t.kind = TargetKind::ATU;
    return t;
}
Target Target::late(int k) {
    Target t;
    t.kind = TargetKind::LATE;
    t.k = k;
    return t;
}
Target Target::additive_prte(double eps) {
    Target t;
    t.kind = TargetKind::AdditivePRTE;
    t.policy = {PolicyKind::Additive, eps};
    return t;
}
Target Target::proportional_prte(double eps) {
    Target t;
    t.kind = TargetKind::ProportionalPRTE;
    t.policy = {PolicyKind::Proportional, eps};
    return t;
}
Target Target::quota(double eps_lo, double eps_hi, double phi) {
    Target t;
    t.kind = TargetKind::Quota;
    t.policy.kind = PolicyKind::Quota;
    t.policy.eps_lo = eps_lo;
    t.policy.eps_hi = eps_hi;
    t.policy.phi = phi;
    return t;
}
Target Target::additive_mprte() {
    Target t;
    t.kind = TargetKind::AdditiveMPRTE;
    return t;
}
Target Target::proportional_mprte() {
    Target t;
    t.kind = TargetKind::ProportionalMPRTE;
    return t;
}

std::string Target::name() const {
    switch (kind) {
        case TargetKind::ATE: return "ate";
        case TargetKind::MTE: return "mte";
        case TargetKind::ATT: return "att";
        case TargetKind::ATU: return "atu";
        case TargetKind::LATE: return "late";
        case TargetKind::AdditivePRTE: return "prte-add";
        case TargetKind::ProportionalPRTE: return "prte-prop";
        case TargetKind::Quota: return "quota";
        case TargetKind::AdditiveMPRTE: return "mprte-add";
        case TargetKind::ProportionalMPRTE: return "mprte-prop";
    }
    return "unknown";
}

bool Target::estimated() const { return kind != TargetKind::ATE && kind != TargetKind::MTE; }

TargetKind parse_target_kind(const std::string& name) {
    for (auto k : {TargetKind::ATE, TargetKind::MTE, TargetKind::ATT, TargetKind::ATU, TargetKind::LATE,
                   TargetKind::AdditivePRTE, TargetKind::ProportionalPRTE, TargetKind::Quota,
                   TargetKind::AdditiveMPRTE, TargetKind::ProportionalMPRTE}) {
        Target t;
        t.kind = k;
        if (t.name() == name) return k;
    }
    throw ConfigError("unknown target '" + name + "'");
}

Eigen::VectorXd weight_c1(const Target& t, int order, const Eigen::VectorXd& p, const Eigen::VectorXd& q_in) {
    if (order < 1) throw ConfigError("model order must be at least 1");
    if (p.size() != q_in.size() || p.size() < 1) throw ConfigError("propensity and mass vectors differ in length");
    const Eigen::ArrayXd q = population_mass(t, q_in).array();
    const Eigen::ArrayXd pa = p.array();
    Eigen::VectorXd c = Eigen::VectorXd::Zero(order + 1);
    c[0] = 1.0;
    for (int m = 1; m <= order; ++m) {
        const double inv = 1.0 / (m + 1);
        double v = 0.0;
        switch (t.kind) {
            case TargetKind::ATE:
                v = 0.0;
                break;
            case TargetKind::MTE:
                v = std::pow(t.u, m) - inv;
                break;
            case TargetKind::ATT:
                v = inv * ((q * pa.pow(m + 1)).sum() / (q * pa).sum() - 1.0);
                break;
            case TargetKind::ATU:
                v = inv * (q * (pa - pa.pow(m + 1))).sum() / (q * (1.0 - pa)).sum();
                break;
            case TargetKind::LATE: {
                check_late(t, p);
                double s = 0.0;
                for (int j = 0; j <= m; ++j) s += std::pow(p[t.k], j) * std::pow(p[0], m - j);
                v = inv * (s - 1.0);
                break;
            }
            case TargetKind::AdditivePRTE:
            case TargetKind::ProportionalPRTE:
            case TargetKind::Quota: {
                const auto pp = policy_pieces(t.policy, p);
                const double den = policy_denominator(q, pp.f, pa);
                v = inv * (q * (pp.f.pow(m + 1) - pa.pow(m + 1))).sum() / den - inv;
                break;
            }
            case TargetKind::AdditiveMPRTE:
                v = (q * pa.pow(m)).sum() - inv;
                break;
            case TargetKind::ProportionalMPRTE:
                v = (q * pa.pow(m + 1)).sum() / (q * pa).sum() - inv;
                break;
        }
        c[m] = v;
    }
    return c;
}

WeightGradients weight_c1_gradients(const Target& t, int order, const Eigen::VectorXd& p,
                                    const Eigen::VectorXd& q_in) {
    const Eigen::Index L = p.size();
    WeightGradients g{Eigen::MatrixXd::Zero(order + 1, L), Eigen::MatrixXd::Zero(order + 1, L)};
    const bool mass_fixed = t.mass.size() != 0;
    const Eigen::ArrayXd q = population_mass(t, q_in).array();
    const Eigen::ArrayXd pa = p.array();
    for (int m = 1; m <= order; ++m) {
        const double inv = 1.0 / (m + 1);
        Eigen::ArrayXd dp = Eigen::ArrayXd::Zero(L), dq = Eigen::ArrayXd::Zero(L);
        switch (t.kind) {
            case TargetKind::ATE:
            case TargetKind::MTE:
                break;
            case TargetKind::ATT:
            case TargetKind::ProportionalMPRTE: {
                // ratio S_{m+1} / S_1 with S_k = sum q p^k; ATT carries an extra 1/(m+1).
                const double s1 = (q * pa).sum(), sm = (q * pa.pow(m + 1)).sum();
                const double scale = t.kind == TargetKind::ATT ? inv : 1.0;
                dp = scale * ((m + 1) * q * pa.pow(m) * s1 - sm * q) / (s1 * s1);
                dq = scale * (pa.pow(m + 1) * s1 - sm * pa) / (s1 * s1);
                break;
            }
            case TargetKind::ATU: {
                const double num = (q * (pa - pa.pow(m + 1))).sum(), den = (q * (1.0 - pa)).sum();
                dp = inv * (q * (1.0 - (m + 1) * pa.pow(m)) * den + num * q) / (den * den);
                dq = inv * ((pa - pa.pow(m + 1)) * den - num * (1.0 - pa)) / (den * den);
                break;
            }
            case TargetKind::LATE: {
                check_late(t, p);
                const double pk = p[t.k], p0 = p[0];
                double dk = 0.0, d0 = 0.0;
                for (int j = 0; j <= m; ++j) {
                    if (j > 0) dk += j * std::pow(pk, j - 1) * std::pow(p0, m - j);
                    if (m - j > 0) d0 += (m - j) * std::pow(pk, j) * std::pow(p0, m - j - 1);
                }
                dp[t.k] = inv * dk;
                dp[0] = inv * d0;
                break;
            }
            case TargetKind::AdditivePRTE:
            case TargetKind::ProportionalPRTE:
            case TargetKind::Quota: {
                const auto pp = policy_pieces(t.policy, p);
                const double den = policy_denominator(q, pp.f, pa);
                const double num = inv * (q * (pp.f.pow(m + 1) - pa.pow(m + 1))).sum();
                const Eigen::ArrayXd dnum_p = q * (pp.f.pow(m) * pp.df - pa.pow(m));
                const Eigen::ArrayXd dden_p = q * (pp.df - 1.0);
                dp = (dnum_p * den - num * dden_p) / (den * den);
                const Eigen::ArrayXd dnum_q = inv * (pp.f.pow(m + 1) - pa.pow(m + 1));
                const Eigen::ArrayXd dden_q = pp.f - pa;
                dq = (dnum_q * den - num * dden_q) / (den * den);
                break;
            }
            case TargetKind::AdditiveMPRTE:
                dp = q * m * pa.pow(m - 1);
                dq = pa.pow(m);
                break;
        }
        g.grad_p.row(m) = dp.matrix().transpose();
        if (!mass_fixed) g.grad_q.row(m) = dq.matrix().transpose();
    }
    return g;
}

WeightVector weight_vector(const Target& target, const MteSpec& spec, const CellStats& stats) {
    WeightVector w;
    w.target = target;
    const Eigen::VectorXd c1 = weight_c1(target, spec.order, stats.p_hat, stats.q_hat);
    w.c.resize(2 * c1.size());
    w.c << c1, -c1;
    const auto g = weight_c1_gradients(target, spec.order, stats.p_hat, stats.q_hat);
    w.grad_p = g.grad_p;
    w.grad_q = g.grad_q;
    return w;
}

WeightGradients weight_gradients(const Target& target, const MteSpec& spec, const CellStats& stats) {
    return weight_c1_gradients(target, spec.order, stats.p_hat, stats.q_hat);
}

}  // namespace mte
