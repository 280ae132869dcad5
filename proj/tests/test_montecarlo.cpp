#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "mte/error.hpp"
#include "mte/montecarlo.hpp"

using namespace mte;

namespace {

SweepOptions linear_options(int reps) {
    SweepOptions o;
    o.methods = {Method::AR, Method::CWald};
    o.reps = reps;
    o.seed = 5;
    o.draws = 500;
    return o;
}

std::string csv(const SweepResult& r) {
    std::ostringstream out;
    r.write_csv(out);
    return out.str();
}

std::string temp_path(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("mte_test_" + name);
    std::filesystem::remove(p);
    return p.string();
}

const std::vector<std::pair<double, double>> kGrid{{0.2, 0.8}, {0.4, 0.6}, {0.3, 0.7}};

}  // namespace

TEST(DgpSpec, Validation) {
    auto d = linear_design(Eigen::Vector2d(0.2, 0.8));
    EXPECT_NO_THROW(d.validate());
    d.n = 49;
    EXPECT_THROW(d.validate(), ConfigError);
    d = linear_design(Eigen::Vector2d(0.0, 0.8));
    EXPECT_THROW(d.validate(), ConfigError);
    d = linear_design(Eigen::Vector2d(0.2, 0.8));
    d.q = Eigen::Vector2d(0.5, 0.6);
    EXPECT_THROW(d.validate(), ConfigError);
    d = quadratic_design(Eigen::Vector3d(0.5, 0.2, 0.8));
    EXPECT_EQ(d.theta().size(), 6);
    EXPECT_EQ(d.ate(), 0.0);
}

TEST(DgpSample, MassVectorRespected) {
    auto d = linear_design(Eigen::Vector2d(0.3, 0.6), 100000);
    d.q = Eigen::Vector2d(0.2, 0.8);
    d.seed = 2;
    const auto st = cell_stats(dgp_sample(d));
    EXPECT_NEAR(st.q_hat[0], 0.2, 0.01);
    EXPECT_NEAR(st.p_hat[1], 0.6, 0.01);
}

TEST(Sweep, SizeSurfaceDeterministicAcrossThreads) {
    const auto base = linear_design(Eigen::Vector3d(0.5, 0.2, 0.8));
    auto o = linear_options(40);
    const auto a = size_surface(base, kGrid, o);
    const auto b = size_surface(base, kGrid, o);
    o.threads = 3;
    const auto c = size_surface(base, kGrid, o);
    EXPECT_EQ(csv(a), csv(b));
    EXPECT_EQ(csv(a), csv(c));
    EXPECT_EQ(a.rows.size(), kGrid.size() * 2);
    for (const auto& r : a.rows) {
        EXPECT_GE(r.rate, 0.0);
        EXPECT_LE(r.rate, 1.0);
        EXPECT_NEAR(r.mc_se, std::sqrt(r.rate * (1 - r.rate) / r.reps), 1e-15);
    }
    o.seed = 6;
    EXPECT_NE(csv(size_surface(base, kGrid, o)), csv(a));
}

TEST(Sweep, CheckpointResumeMatchesUninterruptedRun) {
    const auto base = linear_design(Eigen::Vector3d(0.5, 0.2, 0.8));
    auto o = linear_options(30);
    const auto full = size_surface(base, kGrid, o);

    o.checkpoint = temp_path("size.ckpt");
    o.max_points = 1;
    const auto first = size_surface(base, kGrid, o);
    EXPECT_FALSE(first.complete);
    EXPECT_EQ(first.rows.size(), 2u);
    const auto second = size_surface(base, kGrid, o);
    EXPECT_FALSE(second.complete);
    o.max_points = -1;
    const auto resumed = size_surface(base, kGrid, o);
    EXPECT_TRUE(resumed.complete);
    EXPECT_EQ(csv(resumed), csv(full));

    auto other = o;
    other.reps = 31;
    EXPECT_THROW(size_surface(base, kGrid, other), ConfigError);
    std::filesystem::remove(o.checkpoint);
}

TEST(Sweep, PowerCurveResumeAndCsv) {
    const auto design = linear_design(Eigen::Vector3d(0.2, 0.5, 0.8));
    auto o = linear_options(60);
    const std::vector<double> lambdas{-4.0, 0.0, 4.0};
    const auto full = power_curve(design, lambdas, o);
    ASSERT_TRUE(full.complete);
    EXPECT_EQ(full.rate(-4.0, Method::AR), 1.0);
    EXPECT_EQ(full.rate(4.0, Method::CWald), 1.0);
    EXPECT_LT(full.rate(0.0, Method::AR), 0.2);
    EXPECT_THROW(full.rate(1.0, Method::AR), ConfigError);

    const std::string text = csv(full);
    EXPECT_EQ(text.substr(0, text.find('\n')), "lambda,method,reject_rate,reps,mc_se");
    EXPECT_NE(text.find("\n-4,ar,1.000000,60,0.000000\n"), std::string::npos);

    o.checkpoint = temp_path("power.ckpt");
    o.max_points = 1;
    EXPECT_FALSE(power_curve(design, lambdas, o).complete);
    o.max_points = -1;
    EXPECT_EQ(csv(power_curve(design, lambdas, o)), text);
    std::filesystem::remove(o.checkpoint);
}

TEST(Sweep, SizeCsvColumns) {
    const auto base = linear_design(Eigen::Vector3d(0.5, 0.2, 0.8));
    auto o = linear_options(20);
    o.methods = {Method::AR};
    const std::string text = csv(size_surface(base, {{0.2, 0.8}}, o));
    EXPECT_EQ(text.substr(0, text.find('\n')), "p1,p2,method,reject_rate,reps,mc_se");
    EXPECT_EQ(text.rfind("0.2,0.8,ar,", text.find('\n') + 1), text.find('\n') + 1);
}

TEST(Sweep, MethodNames) {
    for (auto m : {Method::AR, Method::CWald, Method::MLC, Method::Wald}) EXPECT_EQ(parse_method(method_name(m)), m);
    EXPECT_THROW(parse_method("lm"), ConfigError);
}

TEST(Sweep, LinearMethodsNeedOrderOne) {
    const auto d = quadratic_design(Eigen::Vector3d(0.2, 0.5, 0.8));
    auto dd = d;
    dd.seed = 1;
    EXPECT_THROW(evaluate_methods(cell_stats(dgp_sample(dd)), 2, {0.0}, linear_options(1), 1), ConfigError);
}
