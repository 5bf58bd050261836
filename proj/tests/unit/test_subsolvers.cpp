#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "dcs/problems.hpp"
#include "dcs/subsolvers.hpp"
#include "oracles.hpp"

using namespace dcs;

namespace {

std::shared_ptr<LinearSplitRhs> scalar_split(double diffusion, double reaction)
{
    return std::make_shared<LinearSplitRhs>(1, std::vector<double>{diffusion}, std::vector<double>{reaction});
}

SubsolverConfig tol(double t)
{
    SubsolverConfig c;
    c.rtol = c.atol = t;
    return c;
}

/// Classical RK4 on the BZ kinetics of one point.
std::array<double, 3> rk4_point(const BzParams& p, std::array<double, 3> u, double T, double h)
{
    const auto n = static_cast<long>(std::llround(T / h));
    auto f = [&](const std::array<double, 3>& v) { return bz_reaction(p, v[0], v[1], v[2]); };
    for (long i = 0; i < n; ++i) {
        const auto k1 = f(u);
        std::array<double, 3> w{};
        for (int c = 0; c < 3; ++c) w[c] = u[c] + 0.5 * h * k1[c];
        const auto k2 = f(w);
        for (int c = 0; c < 3; ++c) w[c] = u[c] + 0.5 * h * k2[c];
        const auto k3 = f(w);
        for (int c = 0; c < 3; ++c) w[c] = u[c] + h * k3[c];
        const auto k4 = f(w);
        for (int c = 0; c < 3; ++c) u[c] += h / 6.0 * (k1[c] + 2 * k2[c] + 2 * k3[c] + k4[c]);
    }
    return u;
}

/// BZ operator on a small grid with cos(pi x) in species a and zeros elsewhere.
struct CosineMode {
    Grid1D grid{101, 0.0, 1.0};
    std::shared_ptr<BzRhs> rhs = std::make_shared<BzRhs>(BzParams{}, grid, 2);
    State u = [this] {
        State v(3 * grid.n, 0.0);
        for (std::size_t j = 0; j < grid.n; ++j) v[3 * j] = std::cos(std::numbers::pi * grid.x(j));
        return v;
    }();
    /// Amplitude factor of the discrete eigenmode after time t.
    double discrete_decay(double t) const
    {
        const double dx = grid.dx();
        const double lam = (2.0 * std::cos(std::numbers::pi * dx) - 2.0) / (dx * dx);
        return std::exp(BzParams{}.Da * lam * t);
    }
};

} // namespace

TEST(SubsolverConfig, ValidatesFields)
{
    SubsolverConfig c;
    EXPECT_NO_THROW(c.validate());
    c.rtol = 0.0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = SubsolverConfig{};
    c.max_internal_steps = 0;
    EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(ReactionPropagator, FastLinearDecay)
{
    const double mu = 1e-5;
    auto rhs = scalar_split(0.0, -1.0 / mu);
    const SubsolverConfig cfg{};
    const auto R = reaction_propagator(rhs, cfg);
    const State out = R->advance(State{1.0}, 0.0, 1e-3);
    const double exact = std::exp(-1e-3 / mu);
    EXPECT_LE(std::abs(out[0] - exact), cfg.rtol * std::abs(exact) + cfg.atol);
}

TEST(ReactionPropagator, ZeroRhsIsIdentity)
{
    auto rhs = scalar_split(0.0, 0.0);
    const auto R = reaction_propagator(rhs, {});
    const State u{0.123456789};
    EXPECT_EQ(R->advance(u, 0.0, 0.5), u);
}

TEST(ReactionPropagator, ZeroStepIsIdentity)
{
    auto rhs = scalar_split(0.0, -3.0);
    const auto R = reaction_propagator(rhs, {});
    const State u{0.7};
    EXPECT_EQ(R->advance(u, 0.0, 0.0), u);
}

TEST(ReactionPropagator, BzPointMatchesFineRk4)
{
    const BzParams p;
    const Grid1D g(5, 0.0, 1.0);
    auto rhs = std::make_shared<BzRhs>(p, g, 2);
    const auto R = reaction_propagator(rhs, tol(1e-8));
    State u(15);
    for (std::size_t j = 0; j < 5; ++j) u[3 * j] = u[3 * j + 1] = u[3 * j + 2] = 0.1;
    const State out = R->advance(u, 0.0, 1e-4);
    const auto ref = rk4_point(p, {0.1, 0.1, 0.1}, 1e-4, 1e-9);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(out[c], ref[c], 1e-6 * std::abs(ref[c])) << "species " << c;
}

TEST(ReactionPropagator, PointsAreIndependent)
{
    const BzParams p;
    const Grid1D g(7, 0.0, 1.0);
    auto rhs = std::make_shared<BzRhs>(p, g, 2);
    const auto R = reaction_propagator(rhs, {});
    State u(21);
    for (std::size_t j = 0; j < 7; ++j) {
        u[3 * j] = 0.1 + 0.2 * j;
        u[3 * j + 1] = 0.01 + 0.1 * j;
        u[3 * j + 2] = 0.05;
    }
    const State all = R->advance(u, 0.0, 1e-3);
    for (std::size_t j = 0; j < 7; ++j) {
        State single(21);
        for (std::size_t i = 0; i < 7; ++i)
            for (int c = 0; c < 3; ++c) single[3 * i + c] = u[3 * j + c];
        const State one = R->advance(single, 0.0, 1e-3);
        for (int c = 0; c < 3; ++c) EXPECT_EQ(all[3 * j + c], one[c]);
    }
}

TEST(ReactionPropagator, TighterToleranceReducesError)
{
    auto rhs = scalar_split(0.0, -1.0);
    const double exact = std::exp(-1.0);
    const double e1 = std::abs(reaction_propagator(rhs, tol(1e-4))->advance(State{1.0}, 0.0, 1.0)[0] - exact);
    const double e2 = std::abs(reaction_propagator(rhs, tol(1e-5))->advance(State{1.0}, 0.0, 1.0)[0] - exact);
    EXPECT_LE(e2, 0.5 * e1);
}

TEST(ReactionPropagator, ShortIntervalsAwayFromOriginEndExactly)
{
    // these lengths once left a one-ulp remainder at t1
    const dcs::ProblemSpec& p = oracle::bz_desk();
    dcs::SubsolverConfig cfg;
    cfg.rtol = cfg.atol = 1e-10;
    const auto R = dcs::reaction_propagator(p.rhs, cfg);
    const auto tab = dcs::radau_iia_3();
    for (double h : {(tab.c[2] - tab.c[1]) * 1.6e-4, tab.c[0] * 4e-5}) {
        dcs::State u;
        EXPECT_NO_THROW(u = R->advance(p.initial_state, p.t0, h)) << h;
        for (double v : u) EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(ReactionPropagator, SemigroupConsistency)
{
    const BzParams p;
    const Grid1D g(5, 0.0, 1.0);
    auto rhs = std::make_shared<BzRhs>(p, g, 2);
    const SubsolverConfig cfg = tol(1e-8);
    const auto R = reaction_propagator(rhs, cfg);
    State u(15);
    for (std::size_t j = 0; j < 5; ++j) {
        u[3 * j] = 0.5;
        u[3 * j + 1] = 0.2;
        u[3 * j + 2] = 0.3;
    }
    const double h = 2e-4;
    const State twice = R->advance(R->advance(u, 0.0, h), h, h);
    const State once = R->advance(u, 0.0, 2 * h);
    for (std::size_t i = 0; i < u.size(); ++i)
        EXPECT_LE(std::abs(twice[i] - once[i]), 10.0 * (cfg.rtol * std::abs(once[i]) + cfg.atol));
}

TEST(DiffusionPropagator, ZeroOperatorIsIdentity)
{
    auto rhs = scalar_split(0.0, -1.0);
    const auto D = diffusion_propagator(rhs, {});
    const State u{2.5};
    EXPECT_EQ(D->advance(u, 0.0, 1.0), u);
}

TEST(DiffusionPropagator, CosineModeDecaysAsDiscreteEigenmode)
{
    const CosineMode m;
    const SubsolverConfig cfg = tol(1e-10);
    const auto D = diffusion_propagator(m.rhs, cfg);
    const double dt = 0.05;
    const State out = D->advance(m.u, 0.0, dt);
    const double f = m.discrete_decay(dt);
    for (std::size_t j = 0; j < m.grid.n; ++j) EXPECT_NEAR(out[3 * j], f * m.u[3 * j], 1e-8);
}

TEST(DiffusionPropagator, CosineModeDecaysAsHeatEquation)
{
    const CosineMode m;
    const SubsolverConfig cfg = tol(1e-8);
    const double dt = 0.05;
    const State out = diffusion_propagator(m.rhs, cfg)->advance(m.u, 0.0, dt);
    const double pi2 = std::numbers::pi * std::numbers::pi;
    const double f = std::exp(-BzParams{}.Da * pi2 * dt);
    // spatial error of the mode: Da pi^4 dx^2 / 12 * dt
    const double spatial = BzParams{}.Da * pi2 * pi2 * m.grid.dx() * m.grid.dx() / 12.0 * dt;
    for (std::size_t j = 0; j < m.grid.n; ++j)
        EXPECT_NEAR(out[3 * j], f * m.u[3 * j], 10.0 * (cfg.rtol + cfg.atol) + 2.0 * spatial);
}

TEST(DiffusionPropagator, PreservesReflectionSymmetry)
{
    const Grid1D g(41, 0.0, 1.0);
    auto rhs = std::make_shared<BzRhs>(BzParams{}, g, 4);
    State u(3 * g.n);
    for (std::size_t j = 0; j < g.n; ++j) {
        const double x = g.x(j);
        u[3 * j] = std::exp(-50.0 * (x - 0.5) * (x - 0.5));
        u[3 * j + 1] = x * (1.0 - x);
        u[3 * j + 2] = 1.0;
    }
    const State out = diffusion_propagator(rhs, tol(1e-9))->advance(u, 0.0, 0.3);
    for (std::size_t j = 0; j < g.n; ++j)
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(out[3 * j + c], out[3 * (g.n - 1 - j) + c], 1e-12);
}

TEST(DiffusionPropagator, TighterToleranceReducesError)
{
    auto rhs = scalar_split(-1.0, 0.0);
    const double exact = std::exp(-1.0);
    auto err = [&](double t) {
        return std::abs(diffusion_propagator(rhs, tol(t))->advance(State{1.0}, 0.0, 1.0)[0] - exact);
    };
    EXPECT_GT(err(1e-4), 0.0);
    EXPECT_LE(err(1e-6), 0.5 * err(1e-4));
}

TEST(DiffusionPropagator, InternalStepsRespectStabilityCap)
{
    const CosineMode m;
    const auto D = std::make_shared<DiffusionPropagator>(m.rhs, SubsolverConfig{});
    const double bound = m.grid.dx() * m.grid.dx() / (2.0 * BzParams{}.Da);
    EXPECT_LE(D->stability_cap(), bound * (1.0 + 1e-12));
}

TEST(DiffusionPropagator, StepCapRaises)
{
    const CosineMode m;
    SubsolverConfig cfg;
    cfg.max_internal_steps = 2;
    EXPECT_THROW(diffusion_propagator(m.rhs, cfg)->advance(m.u, 0.0, 1.0), StepLimitExceeded);
}

TEST(DiffusionPropagator, SemigroupConsistency)
{
    const CosineMode m;
    const SubsolverConfig cfg = tol(1e-8);
    const auto D = diffusion_propagator(m.rhs, cfg);
    const double h = 0.02;
    const State twice = D->advance(D->advance(m.u, 0.0, h), h, h);
    const State once = D->advance(m.u, 0.0, 2 * h);
    for (std::size_t i = 0; i < once.size(); ++i)
        EXPECT_LE(std::abs(twice[i] - once[i]), 10.0 * (cfg.rtol * std::abs(once[i]) + cfg.atol));
}
