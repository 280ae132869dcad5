#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "mte/error.hpp"

namespace mte {

enum class Basis { PolynomialCentered };

/**
 * @brief Model order, basis family and parameter box for a polynomial MTE model.
 *
 * The parameter vector is theta = (theta_1', theta_0')' with
 * theta_d = (mu_d, rho_d1, ..., rho_dM).
 */
struct MteSpec {
    int order = 1;
    Basis basis = Basis::PolynomialCentered;
    Eigen::VectorXd box_lo;
    Eigen::VectorXd box_hi;

    static MteSpec make(int order, double lo = -10.0, double hi = 10.0) {
        MteSpec s;
        s.order = order;
        s.box_lo = Eigen::VectorXd::Constant(2 * (order + 1), lo);
        s.box_hi = Eigen::VectorXd::Constant(2 * (order + 1), hi);
        return s;
    }

    int dim() const { return 2 * (order + 1); }

    void validate() const {
        if (order < 1) throw ConfigError("model order must be at least 1");
        if (box_lo.size() != dim() || box_hi.size() != dim())
            throw ConfigError("theta box has wrong dimension");
        for (int i = 0; i < dim(); ++i) {
            if (!std::isfinite(box_lo[i]) || !std::isfinite(box_hi[i]) || !(box_lo[i] < box_hi[i]))
                throw ConfigError("theta box bounds must be finite with lower < upper");
        }
    }
};

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr double kPropensityClamp = 1e-10;

/// Clamp a propensity into [1e-10, 1 - 1e-10]; sets *clamped when it moved.
inline double clamp_propensity(double p, bool* clamped = nullptr) {
    const double lo = kPropensityClamp, hi = 1.0 - kPropensityClamp;
    const double out = p < lo ? lo : (p > hi ? hi : p);
    if (clamped && out != p) *clamped = true;
    return out;
}

namespace detail {

template <typename Scalar>
void check_open_unit(Scalar p) {
    if (!(p > Scalar(0) && p < Scalar(1)))
        throw DataError("propensity score outside (0,1)");
}

}  // namespace detail

/// h_m(u) = u^m - 1/(m+1).
template <typename Scalar>
Scalar basis_h(const MteSpec& spec, int m, Scalar u) {
    if (m < 1 || m > spec.order) throw ConfigError("basis index out of range");
    using std::pow;
    return pow(u, m) - Scalar(1) / Scalar(m + 1);
}

/**
 * @brief E[h_m(U) | U <= p] for d = 1 and E[h_m(U) | U > p] for d = 0.
 *
 * m = 0 is the intercept column and returns 1.
 */
template <typename Scalar>
Scalar control_lambda(const MteSpec& spec, int d, int m, Scalar p) {
    detail::check_open_unit(p);
    if (m < 0 || m > spec.order) throw ConfigError("basis index out of range");
    if (m == 0) return Scalar(1);
    const Scalar scale = Scalar(1) / Scalar(m + 1);
    if (d == 1) {
        using std::pow;
        return (pow(p, m) - Scalar(1)) * scale;
    }
    Scalar sum(0), pj(1);
    for (int j = 1; j <= m; ++j) {
        pj *= p;
        sum += pj;
    }
    return sum * scale;
}

template <typename Scalar>
Scalar control_lambda_deriv(const MteSpec& spec, int d, int m, Scalar p) {
    detail::check_open_unit(p);
    if (m < 0 || m > spec.order) throw ConfigError("basis index out of range");
    if (m == 0) return Scalar(0);
    const Scalar scale = Scalar(1) / Scalar(m + 1);
    if (d == 1) {
        using std::pow;
        return Scalar(m) * pow(p, m - 1) * scale;
    }
    Scalar sum(0), pj(1);
    for (int j = 1; j <= m; ++j) {
        sum += Scalar(j) * pj;
        pj *= p;
    }
    return sum * scale;
}

/// Block-diagonal design with A_d(l, m) = lambda_dm(p_l); the treated block comes first.
template <typename Scalar>
MatrixX<Scalar> build_A(const MteSpec& spec, const VectorX<Scalar>& p) {
    const int K1 = static_cast<int>(p.size());
    const int M1 = spec.order + 1;
    MatrixX<Scalar> A = MatrixX<Scalar>::Zero(2 * K1, 2 * M1);
    for (int l = 0; l < K1; ++l) {
        for (int m = 0; m < M1; ++m) {
            A(l, m) = control_lambda(spec, 1, m, p[l]);
            A(K1 + l, M1 + m) = control_lambda(spec, 0, m, p[l]);
        }
    }
    return A;
}

/// Derivative of A(p) theta with respect to p: stacked diagonal blocks.
template <typename Scalar>
MatrixX<Scalar> build_H(const MteSpec& spec, const VectorX<Scalar>& p, const VectorX<Scalar>& theta) {
    const int K1 = static_cast<int>(p.size());
    const int M1 = spec.order + 1;
    if (theta.size() != 2 * M1) throw ConfigError("theta has wrong dimension");
    MatrixX<Scalar> H = MatrixX<Scalar>::Zero(2 * K1, K1);
    for (int l = 0; l < K1; ++l) {
        Scalar top(0), bottom(0);
        for (int m = 1; m < M1; ++m) {
            top += theta[m] * control_lambda_deriv(spec, 1, m, p[l]);
            bottom += theta[M1 + m] * control_lambda_deriv(spec, 0, m, p[l]);
        }
        H(l, l) = top;
        H(K1 + l, l) = bottom;
    }
    return H;
}

/// Derivative of column j (1-based) of A(p) with respect to p.
template <typename Scalar>
MatrixX<Scalar> build_Mj(const MteSpec& spec, const VectorX<Scalar>& p, int j) {
    const int K1 = static_cast<int>(p.size());
    const int M1 = spec.order + 1;
    if (j < 1 || j > 2 * M1) throw ConfigError("design column index out of range");
    MatrixX<Scalar> Mj = MatrixX<Scalar>::Zero(2 * K1, K1);
    const int d = j <= M1 ? 1 : 0;
    const int m = d == 1 ? j - 1 : j - M1 - 1;
    const int offset = d == 1 ? 0 : K1;
    for (int l = 0; l < K1; ++l) Mj(offset + l, l) = control_lambda_deriv(spec, d, m, p[l]);
    return Mj;
}

}  // namespace mte
