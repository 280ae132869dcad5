#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include "mte/data.hpp"
#include "mte/json_io.hpp"
#include "mte/linear.hpp"
#include "mte/montecarlo.hpp"

using namespace mte;

namespace {

Dataset parse(const std::string& text, const Schema& schema = {}) {
    std::istringstream in(text);
    return parse_csv(in, schema);
}

}  // namespace

TEST(LoadCsv, SixRows) {
    const auto data = parse("y,d,z\n1.0,1,a\n2.0,0,a\n3.5,1,b\n0.5,0,b\n1.5,1,a\n2.5,0,b\n");
    EXPECT_EQ(data.size(), 6u);
    EXPECT_EQ(data.num_levels(), 2);
    EXPECT_EQ(data.instrument_levels[0], "a");
    EXPECT_FALSE(data.has_covariate());
}

TEST(LoadCsv, InvalidTreatment) {
    try {
        parse("y,d,z\n1.0,2,a\n");
        FAIL() << "expected a DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("invalid treatment value"), std::string::npos);
    }
}

TEST(LoadCsv, MissingColumnAndEmptyFile) {
    try {
        parse("y,d\n1.0,1\n");
        FAIL() << "expected a ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("missing column"), std::string::npos);
    }
    EXPECT_THROW(parse(""), DataError);
    EXPECT_THROW(parse("y,d,z\n"), DataError);
    EXPECT_THROW(load_csv("/nonexistent/file.csv", {}), ConfigError);
}

TEST(LoadCsv, CovariateAndOrdering) {
    Schema schema;
    schema.w = "court";
    schema.z_order = {"b", "a"};
    const auto data = parse("y,d,z,court\n1,1,a,x\n2,0,b,y\n3,1,b,x\n", schema);
    ASSERT_TRUE(data.has_covariate());
    EXPECT_EQ(data.covariate_levels.size(), 2u);
    EXPECT_EQ(data.instrument_levels[0], "b");
    EXPECT_EQ(data.records[0].z, 1);
    EXPECT_EQ(covariate_subset(data, 0).size(), 2u);
}

TEST(CellStats, ConstantOutcome) {
    const auto data = parse("y,d,z\n3,1,a\n3,0,a\n3,1,b\n3,0,b\n3,0,b\n3,1,a\n");
    const auto st = cell_stats(data);
    EXPECT_EQ(st.beta1_hat, Eigen::VectorXd::Constant(2, 3.0));
    EXPECT_EQ(st.beta0_hat, Eigen::VectorXd::Constant(2, 3.0));
    EXPECT_EQ(st.sigma2.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_TRUE(st.zero_variance_warning);
    const auto cov = covariance_estimates(st);
    EXPECT_EQ(cov.sigma_beta1.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(cov.sigma_beta0.cwiseAbs().maxCoeff(), 0.0);
}

TEST(CellStats, OverlapViolation) {
    try {
        cell_stats(parse("y,d,z\n1,0,a\n2,0,a\n3,1,b\n4,0,b\n"));
        FAIL() << "expected an OverlapError";
    } catch (const OverlapError& e) {
        EXPECT_NE(std::string(e.what()).find("overlap violated at (d=1, z=a)"), std::string::npos);
    }
}

TEST(CellStats, MatchesGroupByOracle) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Eigen::VectorXd p(4);
        p << 0.3, 0.45, 0.6, 0.75;
        auto dgp = quadratic_design(p, 3000);
        dgp.seed = seed;
        const auto data = dgp_sample(dgp);
        const auto st = cell_stats(data);

        std::map<std::pair<int, int>, std::vector<double>> groups;
        std::map<int, long> nz;
        for (const auto& r : data.records) {
            groups[{r.d, r.z}].push_back(r.y);
            ++nz[r.z];
        }
        for (int l = 0; l < 4; ++l) {
            EXPECT_EQ(st.q_hat[l], static_cast<double>(nz[l]) / data.size());
            EXPECT_EQ(st.p_hat[l], static_cast<double>(groups[{1, l}].size()) / nz[l]);
            for (int d = 0; d <= 1; ++d) {
                const auto& ys = groups[{d, l}];
                double mean = 0.0;
                for (double y : ys) mean += y;
                mean /= ys.size();
                double var = 0.0;
                for (double y : ys) var += (y - mean) * (y - mean);
                var /= ys.size();
                const double beta = d == 1 ? st.beta1_hat[l] : st.beta0_hat[l];
                EXPECT_NEAR(beta, mean, 1e-12 * (1.0 + std::abs(mean)));
                EXPECT_NEAR(st.sigma2(d, l), var, 1e-10 * (1.0 + var));
                EXPECT_EQ(st.counts(d, l), static_cast<std::int64_t>(ys.size()));
            }
        }
        EXPECT_NEAR(st.q_hat.sum(), 1.0, 1e-12);
    }
}

TEST(CellStats, QuadraticDesignConditionalMean) {
    Eigen::VectorXd p(3);
    p << 0.5, 0.2, 0.8;
    auto dgp = quadratic_design(p, 200000);
    dgp.seed = 11;
    const auto st = cell_stats(dgp_sample(dgp));
    EXPECT_NEAR(st.beta1_hat[0], 2.5, 0.02);
}

TEST(Covariance, Examples) {
    CellStats st;
    st.q_hat = Eigen::VectorXd::Constant(2, 0.5);
    st.p_hat = Eigen::VectorXd::Constant(2, 0.5);
    st.beta1_hat = st.beta0_hat = Eigen::VectorXd::Zero(2);
    st.sigma2 = Eigen::MatrixXd::Ones(2, 2);
    st.counts.resize(2, 2);
    st.counts.setConstant(25);
    st.n = 100;
    const auto cov = covariance_estimates(st);
    EXPECT_LT((cov.sigma_p - Eigen::MatrixXd::Identity(2, 2) * 0.5).cwiseAbs().maxCoeff(), 1e-15);
    // sigma2 / q(d, z) with q(d, z) = 0.25
    EXPECT_NEAR(cov.sigma_beta1(0, 0), 4.0, 1e-12);
    EXPECT_EQ(cov.sigma_beta1(0, 1), 0.0);
}

TEST(Covariance, StructuralInvariants) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(0.1, 0.9);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd p(4);
        for (int i = 0; i < 4; ++i) p[i] = unif(rng);
        auto dgp = quadratic_design(p, 4000);
        dgp.seed = 100 + trial;
        const auto cov = covariance_estimates(cell_stats(dgp_sample(dgp)));
        for (const Eigen::MatrixXd* m : {&cov.sigma_p, &cov.sigma_q, &cov.sigma_beta1, &cov.sigma_beta0})
            EXPECT_LT((*m - m->transpose()).cwiseAbs().maxCoeff(), 1e-15);
        EXPECT_LT(cov.sigma_q.rowwise().sum().cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov.sigma_q).eigenvalues().minCoeff(), -1e-12);
        EXPECT_GT(cov.sigma_p.diagonal().minCoeff(), 0.0);
        EXPECT_GT(cov.sigma_beta1.diagonal().minCoeff(), 0.0);
        EXPECT_GT(cov.sigma_beta0.diagonal().minCoeff(), 0.0);
        const Eigen::MatrixXd off_p = cov.sigma_p - Eigen::MatrixXd(cov.sigma_p.diagonal().asDiagonal());
        EXPECT_EQ(off_p.cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(CellStats, PropensityErrorShrinksAtRootN) {
    Eigen::VectorXd p(3);
    p << 0.3, 0.5, 0.7;
    std::vector<double> err;
    for (long n : {2000L, 20000L, 200000L}) {
        double total = 0.0;
        for (int rep = 0; rep < 20; ++rep) {
            auto dgp = linear_design(p, n);
            dgp.seed = 1000 + rep;
            total += (cell_stats(dgp_sample(dgp)).p_hat - p).cwiseAbs().maxCoeff();
        }
        err.push_back(total / 20);
    }
    // Each tenfold increase in n should shrink the error by about sqrt(10).
    for (int i = 0; i + 1 < 3; ++i) {
        const double ratio = err[i] / err[i + 1];
        EXPECT_GT(ratio, std::sqrt(10.0) / 3.0);
        EXPECT_LT(ratio, std::sqrt(10.0) * 3.0);
    }
}

TEST(CellStats, DistinctPropensities) {
    CellStats st;
    st.p_hat.resize(4);
    st.p_hat << 0.3, 0.3 + 1e-10, 0.5, 0.7;
    EXPECT_EQ(distinct_propensities(st), 3);
}

TEST(CellStats, JsonRoundTripPreservesStatistics) {
    Eigen::VectorXd p(3);
    p << 0.2, 0.5, 0.8;
    auto dgp = linear_design(p);
    dgp.seed = 4;
    const auto st = cell_stats(dgp_sample(dgp));
    const auto back = cell_stats_from_json(json::parse(cell_stats_to_json(st).dump()));
    EXPECT_EQ(back.p_hat, st.p_hat);
    EXPECT_EQ(back.beta1_hat, st.beta1_hat);
    EXPECT_EQ(back.sigma2, st.sigma2);
    EXPECT_EQ(back.n, st.n);
    const auto a = ar_test(LinearMomentContext::make(st, 1.0, 0.0), 2, 0.3, 0.05);
    const auto b = ar_test(LinearMomentContext::make(back, 1.0, 0.0), 2, 0.3, 0.05);
    EXPECT_EQ(a.statistic, b.statistic);
}

TEST(DgpSample, DeterministicAndNoEndogeneity) {
    Eigen::VectorXd p(2);
    p << 0.4, 0.6;
    auto dgp = linear_design(p, 1000);
    dgp.seed = 9;
    const auto a = dgp_sample(dgp), b = dgp_sample(dgp);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.records[i].y, b.records[i].y);
        EXPECT_EQ(a.records[i].d, b.records[i].d);
        EXPECT_EQ(a.records[i].z, b.records[i].z);
    }

    dgp.rho1.setZero();
    dgp.rho0.setZero();
    dgp.n = 200000;
    const auto st = cell_stats(dgp_sample(dgp));
    EXPECT_LT((st.beta1_hat - st.beta0_hat).cwiseAbs().maxCoeff(), 0.05);
}
