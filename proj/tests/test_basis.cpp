#include <gtest/gtest.h>

#include <random>

#include "mte/basis.hpp"
#include "support.hpp"

using namespace mte;
using testing_support::central_diff;
using testing_support::integrate;

namespace {

double min_singular(const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    return svd.singularValues().minCoeff();
}

int rank_of(const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto sv = svd.singularValues();
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > 1e-10 * sv[0]) ++r;
    return r;
}

}  // namespace

TEST(Basis, Values) {
    const auto spec = MteSpec::make(3);
    EXPECT_DOUBLE_EQ(basis_h(spec, 1, 0.5), 0.0);
    EXPECT_NEAR(basis_h(spec, 2, 1.0), 2.0 / 3.0, 1e-15);
    EXPECT_THROW(basis_h(spec, 0, 0.5), ConfigError);
    EXPECT_THROW(basis_h(spec, 4, 0.5), ConfigError);
}

TEST(Basis, CenteredOnUnitInterval) {
    const auto spec = MteSpec::make(3);
    for (int m = 1; m <= 3; ++m)
        EXPECT_NEAR(integrate([&](double u) { return basis_h(spec, m, u); }, 0.0, 1.0), 0.0, 1e-10) << m;
}

TEST(ControlLambda, Examples) {
    const auto spec = MteSpec::make(2);
    EXPECT_NEAR(control_lambda(spec, 1, 1, 0.4), -0.3, 1e-15);
    EXPECT_NEAR(control_lambda(spec, 0, 1, 0.4), 0.2, 1e-15);
    EXPECT_EQ(control_lambda(spec, 1, 0, 0.3), 1.0);
    EXPECT_EQ(control_lambda(spec, 0, 0, 0.3), 1.0);
    for (int m = 1; m <= 2; ++m) {
        EXPECT_NEAR(control_lambda(spec, 1, m, 1.0 - 1e-9), 0.0, 1e-8);
        EXPECT_NEAR(control_lambda(spec, 0, m, 1e-9), 0.0, 1e-8);
    }
    EXPECT_THROW(control_lambda(spec, 1, 1, 0.0), DataError);
    EXPECT_THROW(control_lambda(spec, 0, 1, 1.0), DataError);
    EXPECT_THROW(control_lambda(spec, 1, 3, 0.5), ConfigError);
}

TEST(ControlLambda, MatchesQuadratureOnGrid) {
    const auto spec = MteSpec::make(4);
    double worst = 0.0;
    for (int i = 1; i <= 1000; ++i) {
        const double p = i / 1001.0;
        for (int m = 1; m <= 4; ++m) {
            auto h = [&](double u) { return basis_h(spec, m, u); };
            const double l1 = integrate(h, 0.0, p) / p;
            const double l0 = integrate(h, p, 1.0) / (1.0 - p);
            worst = std::max(worst, std::abs(l1 - control_lambda(spec, 1, m, p)));
            worst = std::max(worst, std::abs(l0 - control_lambda(spec, 0, m, p)));
        }
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(ControlLambda, TotalExpectationIdentity) {
    const auto spec = MteSpec::make(5);
    for (int i = 1; i < 200; ++i) {
        const double p = i / 200.0;
        for (int m = 1; m <= 5; ++m)
            EXPECT_NEAR(p * control_lambda(spec, 1, m, p) + (1.0 - p) * control_lambda(spec, 0, m, p), 0.0, 1e-12);
    }
}

TEST(ControlLambdaDeriv, Examples) {
    const auto spec = MteSpec::make(2);
    for (double p : {0.1, 0.5, 0.9}) EXPECT_DOUBLE_EQ(control_lambda_deriv(spec, 1, 1, p), 0.5);
    EXPECT_NEAR(control_lambda_deriv(spec, 0, 2, 0.5), 2.0 / 3.0, 1e-15);
    EXPECT_EQ(control_lambda_deriv(spec, 1, 0, 0.5), 0.0);
    EXPECT_THROW(control_lambda_deriv(spec, 1, 1, 1.5), DataError);
}

TEST(ControlLambdaDeriv, MatchesFiniteDifferenceOnGrid) {
    const auto spec = MteSpec::make(4);
    double worst = 0.0;
    for (int i = 1; i <= 1000; ++i) {
        const double p = i / 1001.0;
        for (int d = 0; d <= 1; ++d) {
            for (int m = 0; m <= 4; ++m) {
                const double fd = central_diff([&](double x) { return control_lambda(spec, d, m, x); }, p);
                worst = std::max(worst, std::abs(fd - control_lambda_deriv(spec, d, m, p)));
            }
        }
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(ControlLambda, LongDoubleInstantiation) {
    const auto spec = MteSpec::make(3);
    const long double v = control_lambda<long double>(spec, 0, 3, 0.5L);
    EXPECT_NEAR(static_cast<double>(v), (0.5 + 0.25 + 0.125) / 4.0, 1e-18);
}

TEST(BuildA, BinaryInstrumentExamples) {
    const auto spec = MteSpec::make(1);
    Eigen::VectorXd p(2);
    p << 0.4, 0.4;
    const Eigen::MatrixXd A = build_A(spec, p);
    Eigen::MatrixXd expected(4, 4);
    expected << 1, -0.3, 0, 0, 1, -0.3, 0, 0, 0, 0, 1, 0.2, 0, 0, 1, 0.2;
    EXPECT_LT((A - expected).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT(min_singular(A), 1e-15);

    p << 0.2, 0.8;
    EXPECT_GT(min_singular(build_A(spec, p)), 0.1);
}

TEST(BuildA, RankAndBlockStructure) {
    const auto spec = MteSpec::make(2);
    Eigen::VectorXd p(3);
    p << 0.2, 0.5, 0.8;
    const Eigen::MatrixXd A = build_A(spec, p);
    EXPECT_EQ(rank_of(A), 6);
    EXPECT_EQ(A.block(0, 3, 3, 3).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(A.block(3, 0, 3, 3).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(A.col(0).head(3), Eigen::VectorXd::Ones(3));
    EXPECT_EQ(A.col(3).tail(3), Eigen::VectorXd::Ones(3));

    p.setConstant(0.37);
    EXPECT_EQ(rank_of(build_A(spec, p)), 2);
    EXPECT_EQ(rank_of(build_A(MteSpec::make(3), Eigen::VectorXd::Constant(5, 0.6).eval())), 2);
}

TEST(BuildA, UnisolventOnDistinctPoints) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.01, 0.99);
    for (int M = 1; M <= 4; ++M) {
        const auto spec = MteSpec::make(M);
        for (int trial = 0; trial < 200; ++trial) {
            Eigen::VectorXd p(M + 1);
            bool ok = false;
            while (!ok) {
                for (int i = 0; i <= M; ++i) p[i] = unif(rng);
                ok = true;
                for (int i = 0; i <= M; ++i)
                    for (int j = 0; j < i; ++j) ok = ok && std::abs(p[i] - p[j]) >= 1e-3;
            }
            const Eigen::MatrixXd A = build_A(spec, p);
            EXPECT_GT(min_singular(A.topLeftCorner(M + 1, M + 1)), 0.0);
            EXPECT_GT(min_singular(A.bottomRightCorner(M + 1, M + 1)), 0.0);
        }
    }
}

TEST(BuildH, ExamplesAndLinearity) {
    const auto spec = MteSpec::make(1);
    Eigen::VectorXd p(2);
    p << 0.5, 0.5;
    EXPECT_EQ(build_H(spec, p, Eigen::VectorXd::Zero(4).eval()).cwiseAbs().maxCoeff(), 0.0);
    Eigen::VectorXd theta(4);
    theta << 0, 1, 0, 0;
    const Eigen::MatrixXd H = build_H(spec, p, theta);
    EXPECT_EQ(H.topRows(2), (Eigen::MatrixXd(2, 2) << 0.5, 0, 0, 0.5).finished());
    EXPECT_EQ(H.bottomRows(2).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_THROW(build_H(spec, p, Eigen::VectorXd::Zero(3).eval()), ConfigError);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    std::normal_distribution<double> normal;
    const auto spec3 = MteSpec::make(3);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd pp(4), a(8), b(8);
        for (int i = 0; i < 4; ++i) pp[i] = unif(rng);
        for (int i = 0; i < 8; ++i) {
            a[i] = normal(rng);
            b[i] = normal(rng);
        }
        const Eigen::MatrixXd diff =
            build_H(spec3, pp, Eigen::VectorXd(a + b)) - build_H(spec3, pp, a) - build_H(spec3, pp, b);
        EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(BuildH, IsDerivativeOfMomentInP) {
    // H(p, theta) e_l = d/dp_l [A(p) theta]
    const auto spec = MteSpec::make(3);
    Eigen::VectorXd p(4), theta(8);
    p << 0.15, 0.4, 0.55, 0.9;
    theta << 0.3, -1.2, 2.0, 0.7, -0.4, 1.5, -2.2, 0.9;
    const Eigen::MatrixXd H = build_H(spec, p, theta);
    for (int l = 0; l < 4; ++l) {
        Eigen::VectorXd up = p, dn = p;
        up[l] += 1e-6;
        dn[l] -= 1e-6;
        const Eigen::VectorXd fd = (build_A(spec, up) * theta - build_A(spec, dn) * theta) / 2e-6;
        EXPECT_LT((fd - H.col(l)).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(BuildMj, ExamplesAndDerivative) {
    const auto spec = MteSpec::make(1);
    Eigen::VectorXd p(2);
    p << 0.3, 0.7;
    EXPECT_EQ(build_Mj(spec, p, 1).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(build_Mj(spec, p, 3).cwiseAbs().maxCoeff(), 0.0);
    const Eigen::MatrixXd M2 = build_Mj(spec, p, 2);
    EXPECT_EQ(M2.topRows(2), (Eigen::MatrixXd(2, 2) << 0.5, 0, 0, 0.5).finished());
    EXPECT_THROW(build_Mj(spec, p, 5), ConfigError);

    const auto spec3 = MteSpec::make(3);
    Eigen::VectorXd q(3);
    q << 0.2, 0.45, 0.8;
    for (int j = 1; j <= 8; ++j) {
        const Eigen::MatrixXd Mj = build_Mj(spec3, q, j);
        for (int l = 0; l < 3; ++l) {
            Eigen::VectorXd up = q, dn = q;
            up[l] += 1e-6;
            dn[l] -= 1e-6;
            const Eigen::VectorXd fd = (build_A(spec3, up).col(j - 1) - build_A(spec3, dn).col(j - 1)) / 2e-6;
            EXPECT_LT((fd - Mj.col(l)).cwiseAbs().maxCoeff(), 1e-6);
        }
    }
}

TEST(MteSpec, Validation) {
    EXPECT_NO_THROW(MteSpec::make(2).validate());
    EXPECT_THROW(MteSpec::make(0).validate(), ConfigError);
    auto s = MteSpec::make(1);
    s.box_lo[0] = 20.0;
    EXPECT_THROW(s.validate(), ConfigError);
    bool clamped = false;
    EXPECT_EQ(clamp_propensity(0.0, &clamped), kPropensityClamp);
    EXPECT_TRUE(clamped);
}
