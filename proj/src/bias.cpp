#include "mte/bias.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mte/error.hpp"
#include "mte/rng.hpp"

namespace mte {

namespace {

double logistic(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double lambda_linear(int d, double p) { return d == 1 ? 0.5 * (p - 1.0) : 0.5 * p; }

double integrate01(const std::function<double(double)>& f) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-13);
}

// Index helpers for v = (1, W, lambda, W lambda).
std::vector<int> range(int from, int count) {
    std::vector<int> r(count);
    for (int i = 0; i < count; ++i) r[i] = from + i;
    return r;
}

Eigen::MatrixXd block(const Eigen::MatrixXd& S, const std::vector<int>& rows, const std::vector<int>& cols) {
    Eigen::MatrixXd out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = S(rows[i], cols[j]);
    return out;
}

}  // namespace

void BiasInputs::validate() const {
    if (!(p1 > 0.0 && p1 < 1.0)) throw ConfigError("P(D=1) must lie in (0,1)");
    const auto L = ew.size();
    if (ew1.size() != L || ew0.size() != L || eta1.size() != L || eta0.size() != L)
        throw ConfigError("covariate moment dimensions disagree");
    if (second) {
        for (const auto& S : *second)
            if (S.rows() != 2 * L + 2 || S.cols() != 2 * L + 2) throw ConfigError("second-moment matrix has wrong size");
    }
}

ArmBias bias_general(const BiasInputs& in, int d) {
    in.validate();
    if (!in.second) throw ConfigError("general bias formulas need the full second-moment matrices");
    if (d != 0 && d != 1) throw ConfigError("arm must be 0 or 1");
    const Eigen::MatrixXd& S = (*in.second)[d];
    const Eigen::VectorXd& eta = d == 1 ? in.eta1 : in.eta0;
    const int L = in.dim();
    const auto X = range(0, L + 1);      // (1, W)
    const auto Wi = range(1, L);          // W
    const std::vector<int> lam{L + 1};    // lambda
    const auto WL = range(L + 2, L);      // W lambda
    const std::vector<int> V{0, L + 1};   // (1, lambda)

    // Residual of lambda on (1, W).
    const Eigen::MatrixXd Sxx = block(S, X, X);
    Eigen::FullPivLU<Eigen::MatrixXd> lux(Sxx);
    if (!lux.isInvertible()) throw NumericalError("covariate second-moment matrix is singular");
    const Eigen::VectorXd b = lux.solve(block(S, X, lam));
    const double var_lperp = S(L + 1, L + 1) - block(S, lam, X).row(0).dot(b);
    if (!(var_lperp > 1e-14)) throw NumericalError("control function has no variation net of covariates");
    const Eigen::VectorXd cov_wl_lperp = block(S, WL, lam).col(0) - block(S, WL, X) * b;

    ArmBias out;
    out.rho = cov_wl_lperp.dot(eta) / var_lperp;

    // Residual of W on (1, lambda).
    const Eigen::MatrixXd Svv = block(S, V, V);
    Eigen::FullPivLU<Eigen::MatrixXd> luv(Svv);
    if (!luv.isInvertible()) throw NumericalError("control-function second-moment matrix is singular");
    const Eigen::MatrixXd B = luv.solve(block(S, V, Wi));
    const Eigen::MatrixXd wperp = block(S, Wi, Wi) - block(S, Wi, V) * B;
    const Eigen::MatrixXd wperp_wl = block(S, Wi, WL) - B.transpose() * block(S, V, WL);
    Eigen::FullPivLU<Eigen::MatrixXd> luw(wperp);
    if (!luw.isInvertible()) throw NumericalError("covariates have no variation net of the control function");
    out.tau = luw.solve(wperp_wl * eta);

    const Eigen::VectorXd ew = block(S, {0}, Wi).row(0).transpose();
    const double elam = S(0, L + 1);
    const Eigen::VectorXd ewl = block(S, {0}, WL).row(0).transpose();
    out.mu = -ew.dot(out.tau) - out.rho * elam + eta.dot(ewl);
    return out;
}

EstimandBias bias_ate_cate_slope(const BiasInputs& in, const Eigen::VectorXd* w_point) {
    in.validate();
    EstimandBias out;
    out.ate = (in.ew - in.ew1).dot(in.eta1) * in.elam1 - (in.ew - in.ew0).dot(in.eta0) * in.elam0;
    const Eigen::VectorXd& w = w_point ? *w_point : in.ew;
    if (w.size() != in.ew.size()) throw ConfigError("covariate point has wrong dimension");
    out.cate = (w - in.ew1).dot(in.eta1) * in.elam1 - (w - in.ew0).dot(in.eta0) * in.elam0;
    out.slope = (in.ew1 - in.ew0).dot((1.0 - in.p1) * in.eta1 + in.p1 * in.eta0);
    return out;
}

EstimandBias bias_from_moments(const BiasInputs& in, const Eigen::VectorXd* w_point) {
    const ArmBias b1 = bias_general(in, 1), b0 = bias_general(in, 0);
    const Eigen::VectorXd& w = w_point ? *w_point : in.ew;
    if (w.size() != in.ew.size()) throw ConfigError("covariate point has wrong dimension");
    EstimandBias out;
    out.ate = b1.mu - b0.mu + in.ew.dot(b1.tau - b0.tau);
    out.cate = b1.mu - b0.mu + w.dot(b1.tau - b0.tau);
    out.slope = b1.rho - b0.rho - in.ew.dot(in.eta1 - in.eta0);
    return out;
}

BiasInputs selection_design_moments(const SelectionDesign& g) {
    // Integrate over u = F_Z(z) in (0,1) so that Z = logit(u).
    auto prop = [&](double w, double u) {
        const double e = std::exp(g.b * w);
        return e * u / (e * u + 1.0 - u);
    };
    BiasInputs in;
    in.eta1 = Eigen::VectorXd::Constant(1, g.delta);
    in.eta0 = Eigen::VectorXd::Constant(1, g.delta);
    in.ew = Eigen::VectorXd::Constant(1, 0.5);
    std::array<Eigen::MatrixXd, 2> second{Eigen::MatrixXd::Zero(4, 4), Eigen::MatrixXd::Zero(4, 4)};
    double mass[2] = {0.0, 0.0};
    for (int d = 0; d <= 1; ++d) {
        for (int w = 0; w <= 1; ++w) {
            for (int i = 0; i < 4; ++i) {
                for (int j = i; j < 4; ++j) {
                    const double val = integrate01([&](double u) {
                        const double p = prop(w, u);
                        const double sel = d == 1 ? p : 1.0 - p;
                        const double lam = lambda_linear(d, p);
                        const double v[4] = {1.0, static_cast<double>(w), lam, w * lam};
                        return sel * v[i] * v[j];
                    });
                    second[d](i, j) += 0.5 * val;
                }
            }
        }
        mass[d] = second[d](0, 0);
        second[d] = second[d].selfadjointView<Eigen::Upper>();
        second[d] /= mass[d];
    }
    in.p1 = mass[1];
    in.ew1 = Eigen::VectorXd::Constant(1, second[1](0, 1));
    in.ew0 = Eigen::VectorXd::Constant(1, second[0](0, 1));
    in.elam1 = second[1](0, 2);
    in.elam0 = second[0](0, 2);
    in.second = second;
    return in;
}

SelectionSample simulate_selection_design(const SelectionDesign& g, long n, std::uint64_t seed) {
    if (n < 10) throw ConfigError("selection sample needs at least 10 draws");
    SelectionSample s{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
    auto rng = make_rng(seed, kStreamData);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal;
    for (long i = 0; i < n; ++i) {
        const double w = unif(rng) < 0.5 ? 1.0 : 0.0;
        double uz = unif(rng);
        uz = std::min(std::max(uz, 1e-300), 1.0 - 1e-16);
        const double z = std::log(uz) - std::log1p(-uz);
        const double p = logistic(g.b * w + z);
        const double u = unif(rng);
        const double e1 = normal(rng), e0 = normal(rng);
        const int d = u <= p ? 1 : 0;
        const double h = u - 0.5;
        const double y1 = g.mu1 + (g.rho1 + g.delta * w) * h + e1;
        const double y0 = g.mu0 + (g.rho0 + g.delta * w) * h + e0;
        s.w[i] = w;
        s.p[i] = p;
        s.d[i] = d;
        s.y[i] = d ? y1 : y0;
    }
    return s;
}

BiasInputs moments_from_sample(const SelectionSample& s, const SelectionDesign& g) {
    BiasInputs in;
    in.eta1 = Eigen::VectorXd::Constant(1, g.delta);
    in.eta0 = Eigen::VectorXd::Constant(1, g.delta);
    std::array<Eigen::MatrixXd, 2> second{Eigen::MatrixXd::Zero(4, 4), Eigen::MatrixXd::Zero(4, 4)};
    double count[2] = {0.0, 0.0};
    for (Eigen::Index i = 0; i < s.w.size(); ++i) {
        const int d = s.d[i] > 0.5 ? 1 : 0;
        const double lam = lambda_linear(d, s.p[i]);
        const Eigen::Vector4d v(1.0, s.w[i], lam, s.w[i] * lam);
        second[d] += v * v.transpose();
        count[d] += 1.0;
    }
    if (count[0] == 0.0 || count[1] == 0.0) throw DataError("sample has an empty treatment arm");
    for (int d = 0; d <= 1; ++d) second[d] /= count[d];
    in.p1 = count[1] / (count[0] + count[1]);
    in.ew1 = Eigen::VectorXd::Constant(1, second[1](0, 1));
    in.ew0 = Eigen::VectorXd::Constant(1, second[0](0, 1));
    in.ew = Eigen::VectorXd::Constant(1, s.w.mean());
    in.elam1 = second[1](0, 2);
    in.elam0 = second[0](0, 2);
    in.second = second;
    return in;
}

SingularityReport two_stage_singularity(const DgpSpec& dgp, bool reparameterized) {
    if (dgp.order != 1) throw ConfigError("the two-stage moment diagnostic needs a linear MTE design");
    const Dataset data = dgp_sample(dgp);
    const int L = static_cast<int>(dgp.p.size());
    const int width = 4 + L;
    const long n = static_cast<long>(data.size());
    Eigen::MatrixXd G(n, width);
    const double rho1 = dgp.rho1[0], rho0 = dgp.rho0[0];
    for (long i = 0; i < n; ++i) {
        const Record& r = data.records[static_cast<std::size_t>(i)];
        const double p = dgp.p[r.z];
        double x0 = lambda_linear(0, p), x1 = lambda_linear(1, p);
        double a0 = dgp.mu0, a1 = dgp.mu1;
        if (reparameterized) {
            x0 -= lambda_linear(0, dgp.p[0]);
            x1 -= lambda_linear(1, dgp.p[0]);
            a0 += rho0 * lambda_linear(0, dgp.p[0]);
            a1 += rho1 * lambda_linear(1, dgp.p[0]);
        }
        const double r0 = (1 - r.d) * (r.y - a0 - rho0 * x0);
        const double r1 = r.d * (r.y - a1 - rho1 * x1);
        G(i, 0) = r0;
        G(i, 1) = r0 * x0;
        G(i, 2) = r1;
        G(i, 3) = r1 * x1;
        for (int l = 0; l < L; ++l) G(i, 4 + l) = r.z == l ? dgp.p[l] - r.d : 0.0;
    }
    const Eigen::MatrixXd centered = G.rowwise() - G.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    SingularityReport rep;
    rep.min_eigenvalue = es.eigenvalues().minCoeff();
    rep.max_eigenvalue = es.eigenvalues().maxCoeff();
    rep.ratio = rep.max_eigenvalue > 0.0 ? std::max(0.0, rep.min_eigenvalue) / rep.max_eigenvalue : 0.0;
    return rep;
}

}  // namespace mte
