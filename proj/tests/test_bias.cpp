#include <gtest/gtest.h>

#include "mte/bias.hpp"
#include "mte/error.hpp"
#include "support.hpp"

using namespace mte;

namespace {

// Moments of v = (1, W, lambda, W lambda) for a binary W independent of lambda within the arm.
Eigen::MatrixXd independent_second(double ew, double elam, double elam2) {
    const int wpow[4] = {0, 1, 0, 1}, lpow[4] = {0, 0, 1, 1};
    const double lam_moment[3] = {1.0, elam, elam2};
    Eigen::MatrixXd S(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) S(i, j) = (wpow[i] + wpow[j] > 0 ? ew : 1.0) * lam_moment[lpow[i] + lpow[j]];
    return S;
}

BiasInputs independent_inputs(double eta1, double eta0) {
    BiasInputs in;
    in.p1 = 0.4;
    in.ew1 = Eigen::VectorXd::Constant(1, 0.7);
    in.ew0 = Eigen::VectorXd::Constant(1, 0.3);
    in.ew = Eigen::VectorXd::Constant(1, 0.4 * 0.7 + 0.6 * 0.3);
    in.elam1 = -0.3;
    in.elam0 = 0.25;
    in.eta1 = Eigen::VectorXd::Constant(1, eta1);
    in.eta0 = Eigen::VectorXd::Constant(1, eta0);
    in.second = std::array<Eigen::MatrixXd, 2>{independent_second(0.3, 0.25, 0.25 * 0.25 + 0.02),
                                               independent_second(0.7, -0.3, 0.09 + 0.03)};
    return in;
}

}  // namespace

TEST(Bias, ZeroWithoutHeterogeneity) {
    SelectionDesign g;
    g.b = 3.0;
    g.delta = 0.0;
    const auto in = selection_design_moments(g);
    const auto closed = bias_ate_cate_slope(in);
    const auto general = bias_from_moments(in);
    for (double v : {closed.ate, closed.cate, closed.slope, general.ate, general.cate, general.slope})
        EXPECT_NEAR(v, 0.0, 1e-10);
    const auto arm = bias_general(in, 1);
    EXPECT_NEAR(arm.rho, 0.0, 1e-10);
    EXPECT_NEAR(arm.tau[0], 0.0, 1e-10);
}

TEST(Bias, ZeroWhenCovariateBalancedAcrossArms) {
    BiasInputs in = independent_inputs(2.0, -1.0);
    in.ew1 = in.ew0 = in.ew;
    const auto b = bias_ate_cate_slope(in);
    EXPECT_EQ(b.ate, 0.0);
    EXPECT_EQ(b.cate, 0.0);
    EXPECT_EQ(b.slope, 0.0);
}

TEST(Bias, GeneralFormulasReduceToClosedForms) {
    for (double eta1 : {-2.0, 0.5, 3.0}) {
        for (double eta0 : {-1.0, 0.0, 2.0}) {
            const auto in = independent_inputs(eta1, eta0);
            const Eigen::VectorXd w = Eigen::VectorXd::Constant(1, 1.0);
            const auto closed = bias_ate_cate_slope(in, &w);
            const auto general = bias_from_moments(in, &w);
            EXPECT_NEAR(closed.ate, general.ate, 1e-10);
            EXPECT_NEAR(closed.cate, general.cate, 1e-10);
            EXPECT_NEAR(closed.slope, general.slope, 1e-10);
        }
    }
}

TEST(Bias, ZeroOnAxesOfSelectionDesign) {
    for (double v : {-5.0, -2.5, 2.5, 5.0}) {
        SelectionDesign g;
        g.b = 0.0;
        g.delta = v;
        auto b = bias_from_moments(selection_design_moments(g));
        EXPECT_NEAR(b.ate, 0.0, 1e-10);
        EXPECT_NEAR(b.slope, 0.0, 1e-10);
        g.b = v;
        g.delta = 0.0;
        b = bias_from_moments(selection_design_moments(g));
        EXPECT_NEAR(b.ate, 0.0, 1e-10);
        EXPECT_NEAR(b.slope, 0.0, 1e-10);
    }
}

TEST(Bias, SignFlipAtCorner) {
    SelectionDesign g;
    g.b = 5.0;
    g.delta = 5.0;
    const auto b = bias_from_moments(selection_design_moments(g));
    const double true_ate = g.mu1 - g.mu0;
    EXPECT_EQ(true_ate, 0.5);
    EXPECT_LT(true_ate + b.ate, 0.0);
}

TEST(Bias, MatchesSimulatedShortRegressions) {
    const Eigen::VectorXd w1 = Eigen::VectorXd::Constant(1, 1.0);
    for (auto [b, delta] : {std::pair{5.0, 5.0}, {-2.5, 5.0}, {5.0, -2.5}}) {
        SelectionDesign g;
        g.b = b;
        g.delta = delta;
        const auto formula = bias_from_moments(selection_design_moments(g), &w1);
        const auto sim = testing_support::ols_estimand_gaps(g, 5000000, 3, 1.0, 2);
        EXPECT_NEAR(formula.ate, sim.ate, 0.02) << b << " " << delta;
        EXPECT_NEAR(formula.cate, sim.cate, 0.02) << b << " " << delta;
        EXPECT_NEAR(formula.slope, sim.slope, 0.02) << b << " " << delta;
    }
}

TEST(Bias, SampleMomentsApproachPopulation) {
    SelectionDesign g;
    g.b = 2.0;
    g.delta = 1.0;
    const auto pop = selection_design_moments(g);
    const auto est = moments_from_sample(simulate_selection_design(g, 1000000, 5), g);
    EXPECT_NEAR(est.p1, pop.p1, 0.005);
    EXPECT_NEAR(est.ew1[0], pop.ew1[0], 0.005);
    EXPECT_NEAR(est.elam0, pop.elam0, 0.005);
    for (int d = 0; d <= 1; ++d) EXPECT_LT(((*est.second)[d] - (*pop.second)[d]).cwiseAbs().maxCoeff(), 0.01);
}

TEST(Bias, Validation) {
    BiasInputs in = independent_inputs(1.0, 1.0);
    in.second.reset();
    EXPECT_THROW(bias_general(in, 1), ConfigError);
    in = independent_inputs(1.0, 1.0);
    in.p1 = 1.0;
    EXPECT_THROW(bias_ate_cate_slope(in), ConfigError);
    in = independent_inputs(1.0, 1.0);
    EXPECT_THROW(bias_general(in, 2), ConfigError);
}

TEST(Singularity, EqualPropensitiesAreCollinear) {
    DgpSpec d = linear_design(Eigen::Vector2d(0.5, 0.5), 100000);
    d.seed = 1;
    EXPECT_LT(two_stage_singularity(d).ratio, 1e-8);
    EXPECT_LT(two_stage_singularity(d, true).ratio, 1e-8);
    d.p << 0.2, 0.8;
    EXPECT_GT(two_stage_singularity(d).ratio, 1e-4);
    EXPECT_THROW(two_stage_singularity(quadratic_design(Eigen::Vector2d(0.2, 0.8))), ConfigError);
}
