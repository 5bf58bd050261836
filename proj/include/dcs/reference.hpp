#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "dcs/errors.hpp"
#include "dcs/linalg.hpp"
#include "dcs/radau.hpp"
#include "dcs/rhs.hpp"
#include "dcs/state.hpp"

namespace dcs {

struct ReferenceConfig {
    enum class Jacobian { analytic, finite_difference };

    double rtol = 1e-12;
    double atol = 1e-12;
    double newton_tol = 0.0;
    int newton_max_iters = 7;
    std::size_t max_steps = 10000000;
    Jacobian jacobian = Jacobian::analytic;
    /// Reuse J and the LU while the Newton rate stays below this value.
    double reuse_theta = 0.5;

    void validate() const
    {
        detail::require(rtol > 0.0 && atol > 0.0, "ReferenceConfig: tolerances must be positive");
        detail::require(newton_max_iters >= 1 && max_steps >= 1, "ReferenceConfig: caps must be >= 1");
    }
};

/// States at the requested checkpoint times (hit exactly, no interpolation).
struct Trajectory {
    std::vector<double> times;
    std::vector<State> states;
    RadauStats stats;

    const State& final_state() const
    {
        detail::require(!states.empty(), "Trajectory: empty");
        return states.back();
    }
};

namespace detail {

/// Banded Jacobian by column-grouped forward differences: columns that are
/// more than 2*bw apart never share a row, so one RHS call serves a group.
inline void fd_band_jacobian(const RhsOperator& op, double t, std::span<const double> u, BandMatrix& jac)
{
    const std::size_t n = u.size();
    const std::size_t bw = std::min(op.bandwidth(), n ? n - 1 : 0);
    const std::size_t stride = 2 * bw + 1;
    State f0(n), f1(n), up(u.begin(), u.end());
    std::vector<double> h(n);
    op.apply(t, u, f0);
    jac.set_zero();
    const double sq = std::sqrt(std::numeric_limits<double>::epsilon());
    for (std::size_t g = 0; g < std::min(stride, n); ++g) {
        for (std::size_t c = g; c < n; c += stride) {
            h[c] = sq * std::max(1e-5, std::abs(u[c]));
            up[c] = u[c] + h[c];
            h[c] = up[c] - u[c];
        }
        op.apply(t, up, f1);
        for (std::size_t c = g; c < n; c += stride) {
            const std::size_t r0 = c > bw ? c - bw : 0;
            const std::size_t r1 = std::min(n - 1, c + bw);
            for (std::size_t r = r0; r <= r1; ++r) jac(r, c) = (f1[r] - f0[r]) / h[c];
            up[c] = u[c];
        }
    }
}

struct CoupledSystem {
    const RhsOperator& op;
    ReferenceConfig::Jacobian kind;

    std::size_t size() const { return op.size(); }
    std::size_t bandwidth() const { return op.bandwidth(); }
    void rhs(double t, std::span<const double> y, std::span<double> f) const { op.apply(t, y, f); }
    void jacobian(double t, std::span<const double> y, BandMatrix& jac) const
    {
        if (kind == ReferenceConfig::Jacobian::analytic)
            op.jacobian(t, y, jac);
        else
            fd_band_jacobian(op, t, y, jac);
    }
};

} // namespace detail

/// Integrates the fully coupled system du/dt = F1(u) + F2(u) with adaptive
/// RadauIIA(3). The returned trajectory holds u0 at t0 followed by the state
/// at every checkpoint in (t0, tf] and finally at tf.
inline Trajectory reference_solve(const RhsOperator& op, const ReferenceConfig& cfg, double t0, double tf,
                                  std::span<const double> u0, std::vector<double> checkpoints = {})
{
    cfg.validate();
    detail::require(tf > t0, "reference_solve: tf must exceed t0");
    detail::require(u0.size() == op.size(), "reference_solve: state size mismatch");
    std::sort(checkpoints.begin(), checkpoints.end());
    std::vector<double> stops;
    for (double c : checkpoints)
        if (c > t0 && c < tf && (stops.empty() || c > stops.back())) stops.push_back(c);
    stops.push_back(tf);

    RadauOptions opt;
    opt.rtol = cfg.rtol;
    opt.atol = cfg.atol;
    opt.newton_tol = cfg.newton_tol;
    opt.newton_max_iters = cfg.newton_max_iters;
    opt.max_steps = cfg.max_steps;
    opt.jacobian_reuse_theta = cfg.reuse_theta;
    const detail::CoupledSystem sys{op, cfg.jacobian};
    RadauIntegrator<detail::CoupledSystem> integrator(sys, opt);

    Trajectory tr;
    State y(u0.begin(), u0.end());
    tr.times.push_back(t0);
    tr.states.push_back(y);
    double t = t0;
    for (double stop : stops) {
        integrator.integrate(y, t, stop);
        t = stop;
        tr.times.push_back(t);
        tr.states.push_back(y);
    }
    tr.stats = integrator.stats();
    return tr;
}

} // namespace dcs
