#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dcs/experiments.hpp"

using namespace dcs;

TEST(SlopeFit, RecoversPowerLaw)
{
    std::vector<double> dt{1e-2, 5e-3, 2.5e-3, 1.25e-3};
    std::vector<double> err;
    for (double h : dt) err.push_back(3.0 * std::pow(h, 3.0));
    const SlopeFit f = fit_loglog_slope(dt, err);
    EXPECT_NEAR(f.slope, 3.0, 1e-12);
    EXPECT_NEAR(std::exp2(f.intercept), 3.0, 1e-10);
    EXPECT_EQ(f.used, 4u);
}

TEST(SlopeFit, SkipsFloorAndNonFinite)
{
    std::vector<double> dt{1e-2, 5e-3, 2.5e-3, 1.25e-3};
    std::vector<double> err{1e-4, 2.5e-5, std::nan(""), 1e-12};
    const SlopeFit f = fit_loglog_slope(dt, err, 1e-10);
    EXPECT_EQ(f.used, 2u);
    EXPECT_NEAR(f.slope, 2.0, 1e-12);
}

TEST(SlopeFit, SinglePointHasNoSlope)
{
    const SlopeFit f = fit_loglog_slope({1e-3}, {1e-6});
    EXPECT_FALSE(f.valid());
    EXPECT_THROW(fit_loglog_slope({1e-3, 1e-4}, {1e-6}), InvalidArgument);
}

TEST(SlopeFit, PairwiseAndDyadic)
{
    const auto dts = dyadic_steps(1e-3, 4);
    ASSERT_EQ(dts.size(), 4u);
    EXPECT_EQ(dts[3], 1.25e-4);
    std::vector<double> err;
    for (double h : dts) err.push_back(h * h);
    const auto s = pairwise_slopes(dts, err);
    ASSERT_EQ(s.size(), 3u);
    for (double v : s) EXPECT_NEAR(v, 2.0, 1e-12);
}

TEST(Studies, LocalStudyOnLinearSystem)
{
    const ProblemSpec p = linear2x2_problem();
    StudyConfig cfg;
    cfg.sub.rtol = cfg.sub.atol = 1e-13;
    cfg.dts = dyadic_steps(0.1, 4);
    const ConvergenceResult r = converge_local(p, cfg);
    EXPECT_TRUE(r.all_ok());
    EXPECT_EQ(r.k_max, 4);
    ASSERT_EQ(r.slopes.size(), 5u);
    EXPECT_NEAR(r.slopes[0].slope, 2.0, 0.3);
    EXPECT_NEAR(r.slopes[1].slope, 3.0, 0.3);
    const CsvTable t = r.to_csv();
    EXPECT_EQ(t.kind, "converge-local");
    EXPECT_EQ(t.rows.size(), 4u * 5u);
}

TEST(Studies, GlobalStudyOnLinearSystem)
{
    const ProblemSpec p = linear2x2_problem();
    StudyConfig cfg;
    cfg.sub.rtol = cfg.sub.atol = 1e-13;
    cfg.dts = dyadic_steps(0.1, 4);
    const ConvergenceResult r = converge_global(p, cfg, 1.0);
    EXPECT_TRUE(r.all_ok());
    EXPECT_NEAR(r.slopes[0].slope, 1.0, 0.3);
    EXPECT_NEAR(r.slopes[1].slope, 2.0, 0.3);
}

TEST(Studies, EmptyWindowOrGridThrows)
{
    const ProblemSpec p = linear2x2_problem();
    StudyConfig cfg;
    EXPECT_THROW(converge_local(p, cfg), InvalidArgument);
    cfg.dts = {0.1};
    EXPECT_THROW(converge_global(p, cfg, p.t0), InvalidArgument);
}

TEST(Studies, ErrorControlStepsShrinkWithTolerance)
{
    const ProblemSpec p = linear2x2_problem();
    ErrorControlConfig cfg;
    cfg.sub.rtol = cfg.sub.atol = 1e-12;
    cfg.etas = {1e-5, 1e-7, 1e-9};
    cfg.tf = 1.0;
    cfg.dt0 = 1e-3;
    const auto runs = error_control(p, cfg);
    ASSERT_EQ(runs.size(), 9u);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t e = 0; e < 3; ++e) {
            EXPECT_TRUE(runs[r * 3 + e].ok) << runs[r * 3 + e].message;
            if (e > 0) {
                EXPECT_LT(runs[r * 3 + e].mean_dt, runs[r * 3 + e - 1].mean_dt);
            }
        }
    const CsvTable t = error_control_summary_csv(runs);
    EXPECT_EQ(t.rows.size(), 9u);
    EXPECT_EQ(t.rows[0][t.column("rule")], "k");
}

TEST(Studies, AcceptedStepErrorsUseExactFlow)
{
    const ProblemSpec p = linear2x2_problem();
    ControllerConfig cc;
    cc.eta = 1e-8;
    SubsolverConfig sub;
    sub.rtol = sub.atol = 1e-12;
    const AdaptiveResult r = adaptive_integrate(p, SplittingScheme::lie(), cc, 0.0, 0.5, p.initial_state, 1e-3, sub);
    const auto errs = accepted_step_errors(p, r, ReferenceConfig{}, 1);
    EXPECT_EQ(errs.size(), r.accepted_steps());
    for (double e : errs) EXPECT_LE(e, 100.0 * cc.eta);
    EXPECT_EQ(accepted_step_errors(p, r, ReferenceConfig{}, 2).size(), (r.accepted_steps() + 1) / 2);
}
