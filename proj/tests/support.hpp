#pragma once

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <string>

#include "mte/bias.hpp"
#include "mte/data.hpp"
#include "mte/montecarlo.hpp"

namespace testing_support {

inline double integrate(const std::function<double(double)>& f, double a, double b) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13);
}

/// Population cell moments of a DgpSpec by quadrature over U, scaled as if n units were drawn.
inline mte::CellStats population_stats(const mte::DgpSpec& dgp, long n) {
    const int K1 = static_cast<int>(dgp.p.size());
    Eigen::VectorXd q = dgp.q.size() ? dgp.q : Eigen::VectorXd::Constant(K1, 1.0 / K1);
    auto v = [&](const Eigen::VectorXd& rho, double u) {
        double s = 0.0;
        for (int m = 1; m <= rho.size(); ++m) s += rho[m - 1] * (std::pow(u, m) - 1.0 / (m + 1));
        return s;
    };
    mte::CellStats st;
    st.q_hat = q;
    st.p_hat = dgp.p;
    st.beta1_hat.resize(K1);
    st.beta0_hat.resize(K1);
    st.sigma2.resize(2, K1);
    st.counts.resize(2, K1);
    st.n = n;
    for (int l = 0; l < K1; ++l) {
        const double p = dgp.p[l];
        const double m1 = integrate([&](double u) { return v(dgp.rho1, u); }, 0.0, p) / p;
        const double s1 = integrate([&](double u) { return std::pow(v(dgp.rho1, u), 2); }, 0.0, p) / p;
        const double m0 = integrate([&](double u) { return v(dgp.rho0, u); }, p, 1.0) / (1.0 - p);
        const double s0 = integrate([&](double u) { return std::pow(v(dgp.rho0, u), 2); }, p, 1.0) / (1.0 - p);
        st.beta1_hat[l] = dgp.mu1 + m1;
        st.beta0_hat[l] = dgp.mu0 + m0;
        st.sigma2(1, l) = dgp.error_var + s1 - m1 * m1;
        st.sigma2(0, l) = dgp.error_var + s0 - m0 * m0;
        st.counts(1, l) = static_cast<std::int64_t>(std::llround(n * q[l] * p));
        st.counts(0, l) = static_cast<std::int64_t>(std::llround(n * q[l] * (1.0 - p)));
        st.levels.push_back("z" + std::to_string(l));
    }
    return st;
}

/// Central difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-6) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/**
 * Short-regression estimand gaps from OLS of Y on (1, W, lambda_d(P)) within each arm of a simulated
 * sample, accumulated over `chunks` independent samples of size n.
 */
inline mte::EstimandBias ols_estimand_gaps(const mte::SelectionDesign& g, long n, std::uint64_t seed,
                                           double w_point = 1.0, int chunks = 1) {
    Eigen::Matrix3d xx[2] = {Eigen::Matrix3d::Zero(), Eigen::Matrix3d::Zero()};
    Eigen::Vector3d xy[2] = {Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};
    double wsum = 0.0;
    for (int c = 0; c < chunks; ++c) {
        const auto s = mte::simulate_selection_design(g, n, seed * 1000 + c);
        for (long i = 0; i < n; ++i) {
            const int d = s.d[i] > 0.5 ? 1 : 0;
            // E[U - 1/2 | U <= p] and E[U - 1/2 | U > p]
            const double lam = d == 1 ? 0.5 * s.p[i] - 0.5 : 0.5 * s.p[i];
            const Eigen::Vector3d x(1.0, s.w[i], lam);
            xx[d] += x * x.transpose();
            xy[d] += x * s.y[i];
        }
        wsum += s.w.sum();
    }
    const Eigen::Vector3d b1 = xx[1].ldlt().solve(xy[1]), b0 = xx[0].ldlt().solve(xy[0]);
    const double wbar = wsum / (static_cast<double>(n) * chunks);
    const double true_ate = g.mu1 - g.mu0;
    mte::EstimandBias gap;
    gap.ate = b1[0] - b0[0] + wbar * (b1[1] - b0[1]) - true_ate;
    gap.cate = b1[0] - b0[0] + w_point * (b1[1] - b0[1]) - true_ate;
    gap.slope = b1[2] - b0[2] - (g.rho1 - g.rho0);
    return gap;
}

}  // namespace testing_support
