#include "mte/mlc.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <tuple>
#include <vector>

#include "mte/error.hpp"
#include "mte/optim.hpp"
#include "mte/rng.hpp"

namespace mte {

namespace {

// H(p, theta), plus the estimated-weight shift xi_r theta' dc/dp when enabled.
Eigen::MatrixXd effective_H(const MlcContext& ctx, const Eigen::VectorXd& theta) {
    const int K1 = ctx.K() + 1, M1 = ctx.spec.order + 1;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2 * K1, K1);
    const Eigen::VectorXd top = ctx.dlam1 * theta.head(M1);
    const Eigen::VectorXd bottom = ctx.dlam0 * theta.tail(M1);
    for (int l = 0; l < K1; ++l) {
        H(l, l) = top[l];
        H(K1 + l, l) = bottom[l];
    }
    if (ctx.options.estimated_weights) H += ctx.xi_r * (theta.transpose() * ctx.dc_p);
    return H;
}

Eigen::MatrixXd omega_from_H(const MlcContext& ctx, const Eigen::MatrixXd& H, const Eigen::VectorXd& theta) {
    Eigen::MatrixXd omega = H * ctx.cov.sigma_p * H.transpose() + ctx.sigma_beta;
    if (ctx.options.estimated_weights) {
        const Eigen::MatrixXd Gq = ctx.xi_r * (theta.transpose() * ctx.dc_q);
        omega += Gq * ctx.cov.sigma_q * Gq.transpose();
    }
    return omega;
}

Eigen::LLT<Eigen::MatrixXd> factor_omega(const Eigen::MatrixXd& omega) {
    Eigen::LLT<Eigen::MatrixXd> llt(omega);
    if (llt.info() != Eigen::Success)
        throw NumericalError("moment variance Omega is singular; some cell has zero outcome variance");
    return llt;
}

Eigen::MatrixXd d_tilde_impl(const MlcContext& ctx, const Eigen::MatrixXd& H, const Eigen::VectorXd& resid_w) {
    // resid_w = Omega^{-1} (A theta - beta); column j loses Gamma_j resid_w = M_j Sigma_p H' resid_w.
    const int K1 = ctx.K() + 1, M1 = ctx.spec.order + 1;
    const Eigen::VectorXd v = ctx.cov.sigma_p * (H.transpose() * resid_w);
    Eigen::MatrixXd D = ctx.A;
    for (int m = 1; m < M1; ++m) {
        D.col(m).head(K1) -= ctx.dlam1.col(m).cwiseProduct(v);
        D.col(M1 + m).tail(K1) -= ctx.dlam0.col(m).cwiseProduct(v);
    }
    D += (ctx.options.kappa / std::sqrt(ctx.n())) * ctx.xi;
    return D;
}

struct MixtureSample {
    std::vector<double> x;  // chi2(1)
    std::vector<double> y;  // chi2(2K+1)
};

std::mutex g_cache_mutex;
std::map<std::tuple<int, int, std::uint64_t>, std::shared_ptr<const MixtureSample>> g_samples;
std::map<std::tuple<double, int, double, int, std::uint64_t>, double> g_quantiles;
std::string g_cache_dir;

std::shared_ptr<const MixtureSample> mixture_sample(int K, int draws, std::uint64_t seed) {
    const auto key = std::make_tuple(K, draws, seed);
    {
        std::lock_guard<std::mutex> lock(g_cache_mutex);
        const auto it = g_samples.find(key);
        if (it != g_samples.end()) return it->second;
    }
    auto s = std::make_shared<MixtureSample>();
    s->x.resize(draws);
    s->y.resize(draws);
    auto rng = make_rng(seed, kStreamMixture, static_cast<std::uint64_t>(K));
    std::normal_distribution<double> normal;
    std::chi_squared_distribution<double> chi(2.0 * K + 1.0);
    for (int i = 0; i < draws; ++i) {
        const double z = normal(rng);
        s->x[i] = z * z;
        s->y[i] = chi(rng);
    }
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    return g_samples.emplace(key, std::move(s)).first->second;
}

std::string cache_file(double a, int K, double alpha, int draws, std::uint64_t seed) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "mixq_%a_%d_%a_%d_%llu.txt", a, K, alpha, draws,
                  static_cast<unsigned long long>(seed));
    return g_cache_dir + "/" + buf;
}

std::vector<Eigen::VectorXd> latin_hypercube(const MteSpec& spec, int count, Rng& rng) {
    const int dim = spec.dim();
    std::vector<Eigen::VectorXd> pts(count, Eigen::VectorXd(dim));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<int> perm(count);
    for (int i = 0; i < dim; ++i) {
        std::iota(perm.begin(), perm.end(), 0);
        for (int s = count - 1; s > 0; --s) {
            std::uniform_int_distribution<int> pick(0, s);
            std::swap(perm[s], perm[pick(rng)]);
        }
        for (int s = 0; s < count; ++s) {
            const double u = (perm[s] + unif(rng)) / count;
            pts[s][i] = spec.box_lo[i] + u * (spec.box_hi[i] - spec.box_lo[i]);
        }
    }
    return pts;
}

Eigen::MatrixXd null_basis(const Eigen::VectorXd& c) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(c);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(c.size(), c.size());
    return Q.rightCols(c.size() - 1);
}

double mean_box_width(const MteSpec& spec) { return (spec.box_hi - spec.box_lo).mean(); }

Eigen::VectorXd clip_box(const MteSpec& spec, const Eigen::VectorXd& x) {
    return x.cwiseMax(spec.box_lo).cwiseMin(spec.box_hi);
}

}  // namespace

MlcContext MlcContext::make(const MteSpec& spec, const CellStats& stats, const WeightVector& weight,
                            const MlcOptions& options) {
    spec.validate();
    if (weight.c.size() != spec.dim()) throw ConfigError("weight vector does not match the model order");
    if (weight.c.norm() == 0.0) throw ConfigError("weight vector must be nonzero");
    if (!(options.a >= 0.0)) throw ConfigError("AR weight a must be nonnegative");
    if (!(options.kappa >= 0.0)) throw ConfigError("perturbation scale kappa must be nonnegative");
    if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    if (!(options.r >= 0.0 && options.r <= 1.0)) throw ConfigError("r must lie in [0,1]");
    if (!(options.wald_bound >= 0.0)) throw ConfigError("wald_bound must be nonnegative");
    MlcContext ctx;
    ctx.spec = spec;
    ctx.stats = stats;
    ctx.cov = covariance_estimates(stats);
    ctx.weight = weight;
    ctx.options = options;
    const int K1 = stats.K() + 1, M1 = spec.order + 1;

    ctx.xi.resize(2 * K1, 2 * M1);
    auto rng = make_rng(options.seed, kStreamXi);
    std::normal_distribution<double> normal;
    for (int j = 0; j < ctx.xi.cols(); ++j)
        for (int i = 0; i < ctx.xi.rows(); ++i) ctx.xi(i, j) = normal(rng);

    ctx.A = build_A<double>(spec, stats.p_hat);
    ctx.beta = stats.beta_hat();
    ctx.sigma_beta = ctx.cov.sigma_beta();
    ctx.dlam1.resize(K1, M1);
    ctx.dlam0.resize(K1, M1);
    for (int l = 0; l < K1; ++l) {
        for (int m = 0; m < M1; ++m) {
            ctx.dlam1(l, m) = control_lambda_deriv(spec, 1, m, stats.p_hat[l]);
            ctx.dlam0(l, m) = control_lambda_deriv(spec, 0, m, stats.p_hat[l]);
        }
    }
    ctx.xi_r.resize(2 * K1);
    ctx.xi_r.head(K1).setConstant(-options.r);
    ctx.xi_r.tail(K1).setConstant(1.0 - options.r);
    ctx.dc_p = Eigen::MatrixXd::Zero(2 * M1, K1);
    ctx.dc_q = Eigen::MatrixXd::Zero(2 * M1, K1);
    if (options.estimated_weights && weight.grad_p.size() != 0) {
        ctx.dc_p.topRows(M1) = weight.grad_p;
        ctx.dc_p.bottomRows(M1) = -weight.grad_p;
        ctx.dc_q.topRows(M1) = weight.grad_q;
        ctx.dc_q.bottomRows(M1) = -weight.grad_q;
    }
    return ctx;
}

Eigen::MatrixXd omega_hat(const MlcContext& ctx, const Eigen::VectorXd& theta) {
    if (theta.size() != ctx.spec.dim()) throw ConfigError("theta has wrong dimension");
    return omega_from_H(ctx, effective_H(ctx, theta), theta);
}

Eigen::MatrixXd d_tilde(const MlcContext& ctx, const Eigen::VectorXd& theta) {
    const Eigen::MatrixXd H = effective_H(ctx, theta);
    const auto llt = factor_omega(omega_from_H(ctx, H, theta));
    return d_tilde_impl(ctx, H, llt.solve(ctx.A * theta - ctx.beta));
}

MlcParts mlc_parts(const MlcContext& ctx, const Eigen::VectorXd& theta, const Eigen::VectorXd& c) {
    if (theta.size() != ctx.spec.dim() || c.size() != ctx.spec.dim()) throw ConfigError("theta has wrong dimension");
    const Eigen::MatrixXd H = effective_H(ctx, theta);
    const auto llt = factor_omega(omega_from_H(ctx, H, theta));
    const Eigen::VectorXd resid = ctx.A * theta - ctx.beta;
    const Eigen::MatrixXd D = d_tilde_impl(ctx, H, llt.solve(resid));
    // Any square root of Omega gives the same projection, so the Cholesky factor is used.
    const Eigen::VectorXd v = llt.matrixL().solve(resid);
    const Eigen::MatrixXd W = llt.matrixL().solve(D);
    // With W = QR: c'(W'W)^{-1}W'v = u'Q'v and c'(W'W)^{-1}c = |u|^2 where R'u = c.
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(W);
    const int p = static_cast<int>(W.cols());
    const Eigen::MatrixXd R = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    const Eigen::VectorXd rdiag = R.diagonal().cwiseAbs();
    if (!(rdiag.minCoeff() > 1e-13 * rdiag.maxCoeff()))
        throw NumericalError("perturbed gradient matrix is rank deficient; rerun with a different seed");
    const Eigen::VectorXd u = R.transpose().triangularView<Eigen::Lower>().solve(c);
    const Eigen::VectorXd qv = (qr.householderQ().transpose() * v).head(p);
    const double sc = u.squaredNorm();
    const double proj = u.dot(qv);
    MlcParts out;
    out.mrlm = ctx.n() * proj * proj / sc;
    out.ar = ctx.n() * v.squaredNorm();
    out.mlc = out.mrlm + ctx.options.a * out.ar;
    assert(out.ar + 1e-9 * (1.0 + out.ar) >= out.mrlm);
    return out;
}

double mlc_stat(const MlcContext& ctx, const Eigen::VectorXd& theta, const WeightVector& weight) {
    return mlc_parts(ctx, theta, weight.c).mlc;
}

void set_quantile_cache_dir(const std::string& dir) {
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    g_cache_dir = dir;
}

double mixture_quantile(double a, int K, double alpha, int draws, std::uint64_t seed, bool* low_draws) {
    if (!(a >= 0.0)) throw ConfigError("mixture weight a must be nonnegative");
    if (K < 1) throw ConfigError("mixture quantile needs K >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    if (draws < 1) throw ConfigError("mixture quantile needs at least one draw");
    if (low_draws) *low_draws = draws < 10000;
    const auto key = std::make_tuple(a, K, alpha, draws, seed);
    std::string dir;
    {
        std::lock_guard<std::mutex> lock(g_cache_mutex);
        const auto it = g_quantiles.find(key);
        if (it != g_quantiles.end()) return it->second;
        dir = g_cache_dir;
    }
    if (!dir.empty()) {
        std::ifstream in(cache_file(a, K, alpha, draws, seed));
        std::string text;
        if (in >> text) {
            const double q = std::strtod(text.c_str(), nullptr);
            std::lock_guard<std::mutex> lock(g_cache_mutex);
            g_quantiles[key] = q;
            return q;
        }
    }
    const auto sample = mixture_sample(K, draws, seed);
    std::vector<double> mix(draws);
    for (int i = 0; i < draws; ++i) mix[i] = (1.0 + a) * sample->x[i] + a * sample->y[i];
    const double q = empirical_quantile(mix, 1.0 - alpha);
    if (!dir.empty()) {
        std::ofstream out(cache_file(a, K, alpha, draws, seed));
        char buf[64];
        std::snprintf(buf, sizeof buf, "%a\n", q);
        out << buf;
    }
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    g_quantiles[key] = q;
    return q;
}

std::pair<double, double> weight_range(const MteSpec& spec, const Eigen::VectorXd& c) {
    double lo = 0.0, hi = 0.0;
    for (int i = 0; i < c.size(); ++i) {
        const double u = c[i] * spec.box_lo[i], v = c[i] * spec.box_hi[i];
        lo += std::min(u, v);
        hi += std::max(u, v);
    }
    return {lo, hi};
}

Eigen::VectorXd project_slice(const MteSpec& spec, const Eigen::VectorXd& c, double lambda, const Eigen::VectorXd& x) {
    // theta(nu) = clip(x + nu c) and c'theta(nu) is nondecreasing in nu.
    auto at = [&](double nu) { return clip_box(spec, x + nu * c); };
    double span = 1.0;
    for (int i = 0; i < c.size(); ++i) {
        if (c[i] != 0.0) {
            const double reach = std::abs(x[i]) + std::max(std::abs(spec.box_lo[i]), std::abs(spec.box_hi[i]));
            span = std::max(span, reach / std::abs(c[i]) + 1.0);
        }
    }
    double lo = -span, hi = span;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * span; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (c.dot(at(mid)) < lambda)
            lo = mid;
        else
            hi = mid;
    }
    double nu = 0.5 * (lo + hi);
    Eigen::VectorXd theta = at(nu);
    // Exact finish on the active set found by bisection.
    double free_norm = 0.0;
    for (int i = 0; i < c.size(); ++i)
        if (theta[i] > spec.box_lo[i] && theta[i] < spec.box_hi[i]) free_norm += c[i] * c[i];
    if (free_norm > 0.0) {
        nu += (lambda - c.dot(theta)) / free_norm;
        theta = at(nu);
    }
    return theta;
}

ProfiledResult profile_mlc(const MlcContext& ctx, double lambda, const OptSpec& opt, const Eigen::VectorXd* warm_start) {
    const Eigen::VectorXd& c = ctx.weight.c;
    const auto [flo, fhi] = weight_range(ctx.spec, c);
    const double ftol = 1e-10 * (1.0 + std::abs(flo) + std::abs(fhi));
    ProfiledResult best;
    if (lambda < flo - ftol || lambda > fhi + ftol) {
        best.feasible = false;
        best.converged = true;
        return best;
    }
    const Eigen::MatrixXd N = null_basis(c);
    std::vector<Eigen::VectorXd> starts;
    if (warm_start) starts.push_back(*warm_start);
    auto rng = make_rng(ctx.options.seed, kStreamStarts);
    const int n_lhs = std::max(1, opt.starts - static_cast<int>(starts.size()));
    for (auto& pt : latin_hypercube(ctx.spec, n_lhs, rng)) starts.push_back(std::move(pt));

    const double step = 0.05 * mean_box_width(ctx.spec);
    bool all_converged = true;
    for (const auto& start : starts) {
        const Eigen::VectorXd x0 = project_slice(ctx.spec, c, lambda, start);
        auto objective = [&](const Eigen::VectorXd& t) {
            const Eigen::VectorXd theta = x0 + N * t;
            const Eigen::VectorXd proj = project_slice(ctx.spec, c, lambda, theta);
            try {
                return mlc_parts(ctx, proj, c).mlc + (theta - proj).squaredNorm();
            } catch (const NumericalError&) {
                return std::numeric_limits<double>::infinity();
            }
        };
        const Eigen::VectorXd t0 = Eigen::VectorXd::Zero(N.cols());
        auto nm = nelder_mead(objective, t0, step, opt.tol, opt.max_evals, 1e-6, opt.stop_below);
        best.evaluations += nm.evaluations;
        if (!(nm.value <= opt.stop_below)) {
            // A restart from the incumbent repairs collapsed simplices.
            auto polish = nelder_mead(objective, nm.x, 0.1 * step, opt.tol, opt.max_evals, 1e-6, opt.stop_below);
            best.evaluations += polish.evaluations;
            if (polish.value <= nm.value) nm = polish;
        }
        all_converged = all_converged && nm.converged;
        const Eigen::VectorXd theta = project_slice(ctx.spec, c, lambda, x0 + N * nm.x);
        double value = std::numeric_limits<double>::infinity();
        try {
            value = mlc_parts(ctx, theta, c).mlc;
        } catch (const NumericalError&) {
        }
        if (value < best.inf_value) {
            best.inf_value = value;
            best.minimizer_theta = theta;
        }
        if (best.inf_value <= opt.stop_below) break;
    }
    best.converged = all_converged;
    return best;
}

MlcTestResult mlc_test(const MlcContext& ctx, double lambda, const OptSpec& opt, const Eigen::VectorXd* warm_start) {
    MlcTestResult out;
    bool low = false;
    const double cv = mixture_quantile(ctx.options.a, ctx.K(), ctx.options.alpha, ctx.options.quantile_draws,
                                       ctx.options.quantile_seed, &low);
    out.profile = profile_mlc(ctx, lambda, opt, warm_start);
    auto& t = out.test;
    t.statistic = out.profile.inf_value;
    t.critical_value = cv;
    t.reject = !out.profile.feasible || t.statistic > cv;
    t.level = ctx.options.alpha;
    t.meta["evaluations"] = static_cast<double>(out.profile.evaluations);
    t.meta["converged"] = out.profile.converged ? 1.0 : 0.0;
    t.meta["feasible"] = out.profile.feasible ? 1.0 : 0.0;
    t.meta["quantile_draws"] = ctx.options.quantile_draws;
    if (low) t.meta["low_quantile_draws"] = 1.0;
    return out;
}

EfficientFit efficient_estimate(const MlcContext& ctx, const OptSpec& opt) {
    const MteSpec spec = ctx.options.wald_bound > 0.0
                             ? MteSpec::make(ctx.spec.order, -ctx.options.wald_bound, ctx.options.wald_bound)
                             : ctx.spec;
    const double n = ctx.n();
    auto cue = [&](const Eigen::VectorXd& theta) {
        const auto llt = factor_omega(omega_hat(ctx, theta));
        return n * (llt.matrixL().solve(ctx.A * theta - ctx.beta)).squaredNorm();
    };
    auto gls = [&](const Eigen::MatrixXd& omega) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(omega);
        const Eigen::MatrixXd WA = ldlt.solve(ctx.A);
        const Eigen::MatrixXd info = ctx.A.transpose() * WA;
        const Eigen::VectorXd rhs = WA.transpose() * ctx.beta;
        return clip_box(spec, Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(info).solve(rhs));
    };
    std::vector<Eigen::VectorXd> starts;
    const Eigen::VectorXd first = gls(ctx.sigma_beta + 1e-12 * Eigen::MatrixXd::Identity(ctx.A.rows(), ctx.A.rows()));
    starts.push_back(first);
    starts.push_back(gls(omega_hat(ctx, first)));
    auto rng = make_rng(ctx.options.seed, kStreamStarts, 1);
    const int n_lhs = std::max(1, opt.starts - 2);
    for (auto& pt : latin_hypercube(spec, n_lhs, rng)) starts.push_back(std::move(pt));

    auto objective = [&](const Eigen::VectorXd& theta) {
        const Eigen::VectorXd clipped = clip_box(spec, theta);
        return cue(clipped) + (1.0 + n) * (theta - clipped).squaredNorm();
    };
    const double step = 0.05 * mean_box_width(spec);
    EfficientFit fit;
    fit.objective = std::numeric_limits<double>::infinity();
    bool all_converged = true;
    for (const auto& s : starts) {
        auto nm = nelder_mead(objective, s, step, opt.tol, opt.max_evals);
        auto polish = nelder_mead(objective, nm.x, 0.1 * step, opt.tol, opt.max_evals);
        fit.evaluations += nm.evaluations + polish.evaluations;
        if (polish.value <= nm.value) nm = polish;
        all_converged = all_converged && nm.converged;
        const Eigen::VectorXd theta = clip_box(spec, nm.x);
        const double value = cue(theta);
        if (value < fit.objective) {
            fit.objective = value;
            fit.theta = theta;
        }
    }
    fit.converged = all_converged;
    const Eigen::VectorXd& c = ctx.weight.c;
    fit.estimate = c.dot(fit.theta);
    const auto llt = factor_omega(omega_hat(ctx, fit.theta));
    const Eigen::MatrixXd LA = llt.matrixL().solve(ctx.A);
    const Eigen::MatrixXd info = LA.transpose() * LA;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
    lu.setThreshold(1e-13);
    if (!lu.isInvertible() || lu.rcond() < 1e-14) {
        fit.singular = true;
        fit.variance = std::numeric_limits<double>::infinity();
    } else {
        fit.variance = c.dot(lu.solve(c));
        if (!(fit.variance > 0.0)) {
            fit.singular = true;
            fit.variance = std::numeric_limits<double>::infinity();
        }
    }
    return fit;
}

TestResult classical_wald(const MlcContext& ctx, double lambda, const EfficientFit& fit) {
    TestResult t;
    t.level = ctx.options.alpha;
    t.critical_value = chi2_quantile(1.0, 1.0 - ctx.options.alpha);
    const double diff = fit.estimate - lambda;
    t.statistic = fit.singular ? 0.0 : ctx.n() * diff * diff / fit.variance;
    t.reject = t.statistic > t.critical_value;
    t.p_value = 1.0 - chi2_cdf(1.0, t.statistic);
    t.meta["estimate"] = fit.estimate;
    t.meta["singular"] = fit.singular ? 1.0 : 0.0;
    t.meta["converged"] = fit.converged ? 1.0 : 0.0;
    t.meta["evaluations"] = static_cast<double>(fit.evaluations);
    return t;
}

TestResult classical_wald(const MlcContext& ctx, double lambda) {
    return classical_wald(ctx, lambda, efficient_estimate(ctx));
}

std::pair<double, double> wald_interval(const MlcContext& ctx, const EfficientFit& fit) {
    if (fit.singular)
        return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    const double half = std::sqrt(chi2_quantile(1.0, 1.0 - ctx.options.alpha) * fit.variance / ctx.n());
    return {fit.estimate - half, fit.estimate + half};
}

double pretest_weight(int K, double alpha, double gamma, int draws, std::uint64_t seed) {
    if (!(gamma >= 0.0 && alpha + gamma < 1.0)) throw ConfigError("gamma must satisfy 0 <= gamma < 1 - alpha");
    if (gamma == 0.0) return 0.0;
    const double target = chi2_quantile(1.0, 1.0 - alpha);
    auto f = [&](double a) { return mixture_quantile(a, K, alpha + gamma, draws, seed) - target; };
    double lo = 1e-6, hi = 10.0;
    if (!(f(lo) < 0.0 && f(hi) > 0.0)) throw NumericalError("pretest weight bracket [1e-6, 10] does not contain a root");
    while (hi - lo > 1e-7) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

ConfidenceSet mlc_confidence_set(const MlcContext& ctx, const OptSpec& opt, int points, int threads,
                                 double critical_value) {
    const double cv = std::isnan(critical_value)
                          ? mixture_quantile(ctx.options.a, ctx.K(), ctx.options.alpha, ctx.options.quantile_draws,
                                             ctx.options.quantile_seed)
                          : critical_value;
    const EfficientFit fit = efficient_estimate(ctx, opt);
    const auto [flo, fhi] = weight_range(ctx.spec, ctx.weight.c);
    const double half = fit.singular ? 0.5 * (fhi - flo) : 10.0 * std::sqrt(fit.variance / ctx.n());
    OptSpec decide = opt;
    decide.stop_below = cv;
    auto rejects = [&](double lambda) {
        const auto pr = profile_mlc(ctx, lambda, decide, &fit.theta);
        return !pr.feasible || pr.inf_value > cv;
    };
    // A wide estimator box can put the estimate outside the feasible range.
    const double center = std::clamp(fit.estimate, flo, fhi);
    return invert_ci_adaptive(rejects, center, half, points, threads, 3, flo, fhi);
}

PretestResult pretest_ics(const MlcContext& ctx, double gamma, const OptSpec& opt, int points, int threads) {
    PretestResult out;
    out.a_gamma = pretest_weight(ctx.K(), ctx.options.alpha, gamma, ctx.options.quantile_draws,
                                 ctx.options.quantile_seed);
    MlcContext robust = ctx;
    robust.options.a = out.a_gamma;
    const EfficientFit fit = efficient_estimate(ctx, opt);
    out.wald_set = wald_interval(ctx, fit);
    out.robust_set =
        mlc_confidence_set(robust, opt, points, threads, chi2_quantile(1.0, 1.0 - ctx.options.alpha));
    if (!out.robust_set.empty) {
        const double tol = out.robust_set.grid.step() / 100.0;
        out.weak = out.robust_set.hull_lo < out.wald_set.first - tol || out.robust_set.hull_hi > out.wald_set.second + tol;
    }
    return out;
}

}  // namespace mte
