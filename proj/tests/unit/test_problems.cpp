#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dcs/problems.hpp"
#include "oracles.hpp"

using namespace dcs;

TEST(BzKinetics, ReactionAtUnitState)
{
    const auto r = bz_reaction(BzParams{}, 1.0, 1.0, 1.0);
    EXPECT_NEAR(r[0], 5.98e4, 1e-8);
    EXPECT_NEAR(r[1], -99.8, 1e-10);
    EXPECT_EQ(r[2], 0.0);
}

TEST(BzKinetics, JacobianMatchesCentralDifferences)
{
    const BzParams p;
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::array<double, 3> u{U(rng), U(rng), U(rng)};
        const auto J = bz_reaction_jacobian(p, u[0], u[1], u[2]);
        for (int c = 0; c < 3; ++c) {
            const double h = 1e-6;
            auto up = u, dn = u;
            up[c] += h;
            dn[c] -= h;
            const auto fp = bz_reaction(p, up[0], up[1], up[2]);
            const auto fm = bz_reaction(p, dn[0], dn[1], dn[2]);
            for (int r = 0; r < 3; ++r) {
                const double fd = (fp[r] - fm[r]) / (2 * h);
                EXPECT_NEAR(J[r * 3 + c], fd, 1e-6 * std::max(1.0, std::abs(fd))) << r << "," << c;
            }
        }
    }
}

TEST(BzKinetics, StiffnessSetByMu)
{
    const BzParams p;
    const auto rest = bz_rest_state(p);
    const auto J = bz_reaction_jacobian(p, rest[0], rest[1], rest[2]);
    EXPECT_LE(J[0], -1.0 / p.mu * p.q_bz);
    EXPECT_GT(std::abs(J[0]) * p.mu, p.q_bz * 0.99);
}

TEST(BzKinetics, RestStateIsStationary)
{
    const BzParams p;
    const auto s = bz_rest_state(p);
    const auto r = bz_reaction(p, s[0], s[1], s[2]);
    for (double v : r) EXPECT_NEAR(v, 0.0, 1e-9);
    EXPECT_GT(s[1], 0.0);
}

TEST(BzParams, ValidationRejectsBadValues)
{
    BzParams p;
    EXPECT_NO_THROW(p.validate());
    p.mu = 0.5;
    EXPECT_THROW(p.validate(), InvalidArgument);
    p = BzParams{};
    p.Dc = 0.0;
    EXPECT_THROW(p.validate(), InvalidArgument);
    p = BzParams{};
    p.f = -1.0;
    EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(BzRhs, PartsSumToFullOperator)
{
    const Grid1D g(31, 0.0, 1.0);
    for (int order : {2, 4}) {
        const BzRhs op(BzParams{}, g, order);
        std::mt19937 rng(9);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        State u(op.size());
        for (auto& v : u) v = U(rng);
        State f1(u.size()), f2(u.size()), f(u.size());
        op.diffusion(0.0, u, f1);
        op.reaction(0.0, u, f2);
        op.apply(0.0, u, f);
        for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(f[i], f1[i] + f2[i], 1e-9 * std::abs(f[i]) + 1e-12);
    }
}

TEST(BzRhs, RestStateIsStationaryOnGrid)
{
    const BzParams p;
    const Grid1D g(41, 0.0, 1.0);
    const BzRhs op(p, g, 4);
    const auto s = bz_rest_state(p);
    State u(op.size());
    for (std::size_t j = 0; j < g.n; ++j)
        for (int c = 0; c < 3; ++c) u[3 * j + c] = s[c];
    for (double v : op(0.0, u)) EXPECT_NEAR(v, 0.0, 1e-8);
}

TEST(BzRhs, RejectsUnsupportedOrder)
{
    EXPECT_THROW(BzRhs(BzParams{}, Grid1D(11, 0.0, 1.0), 6), InvalidArgument);
}

TEST(ProblemSpec, LinearExactFlow)
{
    const ProblemSpec p = linear2x2_problem();
    const State u = p.exact(0.0, p.initial_state, 0.7);
    const State e = oracle::flow_2x2(0.7, p.initial_state);
    EXPECT_NEAR(u[0], e[0], 1e-14);
    EXPECT_NEAR(u[1], e[1], 1e-14);
}

TEST(ProblemSpec, DahlquistExactFlow)
{
    const ProblemSpec p = dahlquist_problem(-3.0);
    EXPECT_NEAR(p.exact(0.5, State{2.0}, 1.0)[0], 2.0 * std::exp(-1.5), 1e-14);
}

TEST(ProblemSpec, MatrixExponentialOfRotation)
{
    const std::vector<double> M{0.0, -1.0, 1.0, 0.0};
    const State v = expm_apply(2, M, 2.0, State{1.0, 0.0});
    EXPECT_NEAR(v[0], std::cos(2.0), 1e-14);
    EXPECT_NEAR(v[1], std::sin(2.0), 1e-14);
}

TEST(ProblemSpec, LinearSplitValidatesShapes)
{
    EXPECT_THROW(linear_split_problem("x", 2, {0, 1}, {0, 0, 0, 0}, {1, 1}), InvalidArgument);
    EXPECT_THROW(linear_split_problem("x", 2, {0, 0, 0, 0}, {0, 0, 0, 0}, {1}), InvalidArgument);
}

TEST(BzSeed, SingleFrontAtSeedEdge)
{
    const Grid1D g(201, 0.0, 1.0);
    const State u = bz_seed(BzParams{}, g, 0.05);
    const auto xs = bz_front_positions(g, u);
    ASSERT_EQ(xs.size(), 1u);
    EXPECT_NEAR(xs[0], 0.05, g.dx());
}

TEST(BzProblem, SpunUpStateHasOneFront)
{
    const ProblemSpec& p = oracle::bz_desk();
    ASSERT_TRUE(p.grid.has_value());
    const auto xs = bz_front_positions(*p.grid, p.initial_state);
    ASSERT_EQ(xs.size(), 1u);
    EXPECT_GT(xs[0], 0.1);
    EXPECT_LT(xs[0], 0.5);
    EXPECT_DOUBLE_EQ(p.t0, 0.5);
    EXPECT_EQ(p.norm.scale_species, 0);
}

TEST(BzProblem, FrontAdvancesAndStateStaysBounded)
{
    const ProblemSpec& p = oracle::bz_desk();
    ReferenceConfig rc;
    rc.rtol = rc.atol = 1e-8;
    const Trajectory tr = reference_solve(p, rc, p.t0, p.t0 + 0.06, p.initial_state, {p.t0 + 0.02, p.t0 + 0.04});
    double prev = bz_front_positions(*p.grid, tr.states[0]).back();
    for (std::size_t s = 1; s < tr.states.size(); ++s) {
        const auto xs = bz_front_positions(*p.grid, tr.states[s]);
        ASSERT_FALSE(xs.empty());
        // leading front; a pulse back may form behind it
        EXPECT_GT(xs.back(), prev) << "checkpoint " << s;
        prev = xs.back();
        for (std::size_t j = 0; j < p.grid->n; ++j) {
            const double a = tr.states[s][3 * j], b = tr.states[s][3 * j + 1], c = tr.states[s][3 * j + 2];
            EXPECT_GE(a, -1e-6);
            EXPECT_LE(a, 100.0);
            EXPECT_GE(b, -1e-6);
            EXPECT_LE(b, 1.0 + 1e-6);
            EXPECT_GE(c, -1e-6);
            EXPECT_LE(c, 1.0 + 1e-6);
        }
    }
}

TEST(BzProblem, FromStateKeepsGridAndLabels)
{
    const Grid1D g(21, 0.0, 1.0);
    const State u = bz_seed(BzParams{}, g, 0.1);
    const ProblemSpec p = bz_problem_from_state(BzParams{}, g, 4, 0.3, u, {{"origin", "test"}});
    EXPECT_EQ(p.spatial_order, 4);
    EXPECT_DOUBLE_EQ(p.t0, 0.3);
    EXPECT_EQ(p.initial_state, u);
    EXPECT_EQ(p.metadata.at("origin"), "test");
    EXPECT_THROW(bz_problem_from_state(BzParams{}, g, 2, 0.0, State(5)), InvalidArgument);
    const ProblemSpec q = with_spatial_order(p, 2);
    EXPECT_EQ(q.spatial_order, 2);
}
