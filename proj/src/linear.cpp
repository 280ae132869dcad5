#include "mte/linear.hpp"

#include <cmath>
#include <vector>

#include "mte/error.hpp"
#include "mte/rng.hpp"

namespace mte {

namespace {

void check_k(const LinearMomentContext& ctx, int k) {
    if (k < 1 || k > ctx.K()) throw ConfigError("moment index k out of range");
}

// Eigen-decomposition based inverse square root; throws when S is not safely positive definite.
struct SymmetricRoots {
    Eigen::MatrixXd inv;
    Eigen::MatrixXd inv_sqrt;
};

SymmetricRoots symmetric_roots(const Eigen::MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const auto& ev = es.eigenvalues();
    if (!(ev.maxCoeff() > 0.0) || !(ev.minCoeff() > 1e-12 * ev.maxCoeff()))
        throw NumericalError(
            "moment variance is not positive definite; a nonzero weight and positive within-cell outcome variances are "
            "required");
    const Eigen::MatrixXd& V = es.eigenvectors();
    SymmetricRoots r;
    r.inv = V * ev.cwiseInverse().asDiagonal() * V.transpose();
    r.inv_sqrt = V * ev.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
    return r;
}

// d pi / d p: -1 in column 0 and +1 in column k.
Eigen::MatrixXd slope_jacobian(int K) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(K, K + 1);
    J.col(0).setConstant(-1.0);
    J.rightCols(K).setIdentity();
    return J;
}

}  // namespace

LinearMomentContext LinearMomentContext::make(const CellStats& stats, double c_mu, double c_rho) {
    if (c_mu == 0.0 && c_rho == 0.0) throw ConfigError("weight (c_mu, c_rho) must be nonzero");
    if (stats.K() < 1) throw DataError("at least two instrument levels are required");
    LinearMomentContext ctx;
    ctx.stats = stats;
    ctx.cov = covariance_estimates(stats);
    ctx.c_mu = c_mu;
    ctx.c_rho = c_rho;
    const auto L = stats.q_hat.size();
    ctx.dc_mu_dp = ctx.dc_mu_dq = ctx.dc_rho_dp = ctx.dc_rho_dq = Eigen::VectorXd::Zero(L);
    return ctx;
}

LinearMomentContext LinearMomentContext::make(const CellStats& stats, const WeightVector& weight,
                                              bool estimated_weights) {
    if (weight.c.size() != 4) throw ConfigError("linear-MTE inference needs a model of order 1");
    auto ctx = make(stats, weight.c[0], weight.c[1]);
    ctx.estimated_weights = estimated_weights;
    if (estimated_weights && weight.grad_p.size() != 0) {
        ctx.dc_mu_dp = weight.grad_p.row(0).transpose();
        ctx.dc_rho_dp = weight.grad_p.row(1).transpose();
        ctx.dc_mu_dq = weight.grad_q.row(0).transpose();
        ctx.dc_rho_dq = weight.grad_q.row(1).transpose();
    }
    return ctx;
}

Eigen::VectorXd delta_mu(const LinearMomentContext& ctx) {
    const auto& s = ctx.stats;
    const int K = ctx.K();
    Eigen::VectorXd out(K);
    for (int k = 1; k <= K; ++k) {
        out[k - 1] = s.p_hat[k] * (s.beta1_hat[0] - s.beta0_hat[0]) - s.p_hat[0] * (s.beta1_hat[k] - s.beta0_hat[k]) +
                     s.beta1_hat[k] - s.beta1_hat[0];
    }
    return out;
}

Eigen::VectorXd delta_rho(const LinearMomentContext& ctx) {
    const auto& s = ctx.stats;
    const int K = ctx.K();
    Eigen::VectorXd out(K);
    for (int k = 1; k <= K; ++k)
        out[k - 1] = 2.0 * (s.beta0_hat[0] - s.beta1_hat[0] + s.beta1_hat[k] - s.beta0_hat[k]);
    return out;
}

Eigen::VectorXd moment_slope(const LinearMomentContext& ctx) {
    return ctx.stats.p_hat.tail(ctx.K()).array() - ctx.stats.p_hat[0];
}

Eigen::VectorXd moment_vector(const LinearMomentContext& ctx, double lambda) {
    return moment_slope(ctx) * lambda - ctx.c_mu * delta_mu(ctx) - ctx.c_rho * delta_rho(ctx);
}

double moment_g(const LinearMomentContext& ctx, int k, double lambda) {
    check_k(ctx, k);
    return moment_vector(ctx, lambda)[k - 1];
}

MomentJacobians moment_jacobians(const LinearMomentContext& ctx, double lambda) {
    const auto& s = ctx.stats;
    const int K = ctx.K();
    const double cm = ctx.c_mu, cr = ctx.c_rho;
    MomentJacobians J;
    J.wrt_p = J.wrt_beta1 = J.wrt_beta0 = J.wrt_q = Eigen::MatrixXd::Zero(K, K + 1);
    for (int k = 1; k <= K; ++k) {
        const int r = k - 1;
        J.wrt_p(r, 0) = -lambda + (s.beta1_hat[k] - s.beta0_hat[k]) * cm;
        J.wrt_p(r, k) = lambda - (s.beta1_hat[0] - s.beta0_hat[0]) * cm;
        J.wrt_beta1(r, 0) = (1.0 - s.p_hat[k]) * cm + 2.0 * cr;
        J.wrt_beta1(r, k) = -(1.0 - s.p_hat[0]) * cm - 2.0 * cr;
        J.wrt_beta0(r, 0) = s.p_hat[k] * cm - 2.0 * cr;
        J.wrt_beta0(r, k) = -s.p_hat[0] * cm + 2.0 * cr;
    }
    if (ctx.estimated_weights) {
        const Eigen::VectorXd dm = delta_mu(ctx), dr = delta_rho(ctx);
        J.wrt_p -= dm * ctx.dc_mu_dp.transpose() + dr * ctx.dc_rho_dp.transpose();
        J.wrt_q = -(dm * ctx.dc_mu_dq.transpose() + dr * ctx.dc_rho_dq.transpose());
    }
    return J;
}

Eigen::MatrixXd moment_variance(const LinearMomentContext& ctx, double lambda) {
    const auto J = moment_jacobians(ctx, lambda);
    const auto& c = ctx.cov;
    Eigen::MatrixXd S = J.wrt_p * c.sigma_p * J.wrt_p.transpose() +
                        J.wrt_beta1 * c.sigma_beta1 * J.wrt_beta1.transpose() +
                        J.wrt_beta0 * c.sigma_beta0 * J.wrt_beta0.transpose();
    if (ctx.estimated_weights) S += J.wrt_q * c.sigma_q * J.wrt_q.transpose();
    return 0.5 * (S + S.transpose());
}

TestResult ar_test(const LinearMomentContext& ctx, int k, double lambda, double alpha) {
    check_k(ctx, k);
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    const double g = moment_g(ctx, k, lambda);
    const double s2 = moment_variance(ctx, lambda)(k - 1, k - 1);
    if (!(s2 > 0.0)) throw NumericalError("degenerate AR variance: no outcome or propensity variation");
    TestResult r;
    r.statistic = ctx.n() * g * g / s2;
    r.critical_value = chi2_quantile(1.0, 1.0 - alpha);
    r.reject = r.statistic > r.critical_value;
    r.level = alpha;
    r.p_value = 1.0 - chi2_cdf(1.0, r.statistic);
    r.meta["k"] = k;
    return r;
}

CondWaldPieces cond_wald_pieces(const LinearMomentContext& ctx, double lambda) {
    const int K = ctx.K();
    const double n = ctx.n(), rn = std::sqrt(n);
    CondWaldPieces pc;
    pc.g = moment_vector(ctx, lambda);
    pc.pi = moment_slope(ctx);
    pc.S = moment_variance(ctx, lambda);
    const auto roots = symmetric_roots(pc.S);
    const auto J = moment_jacobians(ctx, lambda);
    pc.C = slope_jacobian(K) * ctx.cov.sigma_p * J.wrt_p.transpose();
    pc.h = rn * pc.pi - pc.C * roots.inv * (rn * pc.g);
    const double num = pc.g.dot(roots.inv * pc.pi);
    const double den = pc.pi.dot(roots.inv * pc.pi);
    pc.statistic = den > 0.0 ? n * num * num / den : 0.0;
    return pc;
}

TestResult cond_wald_test(const LinearMomentContext& ctx, double lambda, double alpha, int draws,
                          std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    if (draws < 500) throw ConfigError("conditional Wald needs at least 500 simulation draws");
    const int K = ctx.K();
    const auto pc = cond_wald_pieces(ctx, lambda);
    const auto roots = symmetric_roots(pc.S);
    const Eigen::MatrixXd CS = pc.C * roots.inv_sqrt;

    auto rng = make_rng(seed, kStreamEta);
    std::normal_distribution<double> normal;
    std::vector<double> sims(draws);
    Eigen::VectorXd eta(K);
    int exceed = 0;
    for (int b = 0; b < draws; ++b) {
        for (int i = 0; i < K; ++i) eta[i] = normal(rng);
        const Eigen::VectorXd ps = pc.h + CS * eta;
        const double num = eta.dot(roots.inv_sqrt * ps);
        const double den = ps.dot(roots.inv * ps);
        sims[b] = den > 0.0 ? num * num / den : 0.0;
        if (sims[b] >= pc.statistic) ++exceed;
    }
    TestResult r;
    r.statistic = pc.statistic;
    r.critical_value = empirical_quantile(sims, 1.0 - alpha);
    r.reject = r.statistic > r.critical_value;
    r.level = alpha;
    r.p_value = static_cast<double>(exceed) / draws;
    r.meta["draws"] = draws;
    return r;
}

LinearEstimate linear_point_estimate(const LinearMomentContext& ctx) {
    const Eigen::VectorXd pi = moment_slope(ctx);
    const Eigen::VectorXd gamma = ctx.c_mu * delta_mu(ctx) + ctx.c_rho * delta_rho(ctx);
    Eigen::Index k = 0;
    pi.cwiseAbs().maxCoeff(&k);
    LinearEstimate est;
    if (!(std::abs(pi[k]) > 0.0)) {
        est.estimate = 0.0;
        est.se = std::numeric_limits<double>::infinity();
        return est;
    }
    double lambda = gamma[k] / pi[k];
    for (int iter = 0; iter < 2; ++iter) {
        const Eigen::MatrixXd S = moment_variance(ctx, lambda);
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
        const Eigen::VectorXd w = ldlt.solve(pi);
        const double info = pi.dot(w);
        if (!(info > 0.0) || !std::isfinite(info)) break;
        lambda = gamma.dot(w) / info;
        est.se = std::sqrt(1.0 / (ctx.n() * info));
    }
    est.estimate = lambda;
    if (!(est.se > 0.0) || !std::isfinite(est.se)) est.se = std::numeric_limits<double>::infinity();
    return est;
}

}  // namespace mte
