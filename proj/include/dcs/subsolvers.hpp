#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dcs/errors.hpp"
#include "dcs/radau.hpp"
#include "dcs/rhs.hpp"
#include "dcs/state.hpp"

namespace dcs {

/// Tolerances and caps for one split sub-integrator.
struct SubsolverConfig {
    double rtol = 1e-5;
    double atol = 1e-5;
    std::size_t max_internal_steps = 1000000;
    double newton_tol = 0.0; ///< 0 = automatic (see RadauOptions)
    int newton_max_iters = 7;

    void validate() const
    {
        detail::require(rtol > 0.0 && atol > 0.0, "SubsolverConfig: tolerances must be positive");
        detail::require(max_internal_steps >= 1 && newton_max_iters >= 1,
                        "SubsolverConfig: caps must be >= 1");
        detail::require(newton_tol >= 0.0, "SubsolverConfig: newton_tol must be >= 0");
    }
};

/// Flow map of one split sub-problem: advance(u, t, 0) == u.
class Propagator {
public:
    virtual ~Propagator() = default;
    virtual State advance(std::span<const double> u0, double t0, double dt) const = 0;
};

using PropagatorPtr = std::shared_ptr<const Propagator>;

namespace detail {

/// The reaction term at a single grid point, seen as an m-dimensional ODE.
struct PointReaction {
    const RhsOperator& op;

    std::size_t size() const { return op.species(); }
    std::size_t bandwidth() const { return op.species() - 1; }
    void rhs(double t, std::span<const double> y, std::span<double> f) const { op.reaction_point(t, y, f); }
    void jacobian(double t, std::span<const double> y, BandMatrix& jac) const
    {
        const std::size_t m = op.species();
        std::array<double, 64> buf{};
        std::vector<double> heap;
        std::span<double> block;
        if (m * m <= buf.size()) {
            block = std::span<double>(buf.data(), m * m);
        } else {
            heap.assign(m * m, 0.0);
            block = heap;
        }
        op.reaction_jacobian_point(t, y, block);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < m; ++c) jac(r, c) = block[r * m + c];
    }
};

} // namespace detail

/// Integrates du/dt = F2(u) independently at every grid point with the
/// adaptive RadauIIA integrator. Points never interact, so the result for a
/// point does not depend on the processing order.
class ReactionPropagator final : public Propagator {
public:
    ReactionPropagator(std::shared_ptr<const RhsOperator> op, SubsolverConfig cfg)
        : op_(std::move(op)), cfg_(cfg)
    {
        detail::require(op_ != nullptr, "ReactionPropagator: null operator");
        cfg_.validate();
    }

    State advance(std::span<const double> u0, double t0, double dt) const override
    {
        detail::require(u0.size() == op_->size(), "ReactionPropagator: state size mismatch");
        detail::require(dt >= 0.0, "ReactionPropagator: negative step");
        State u(u0.begin(), u0.end());
        if (dt == 0.0) return u;
        const detail::PointReaction sys{*op_};
        RadauIntegrator<detail::PointReaction> integrator(sys, options());
        const std::size_t m = op_->species();
        for (std::size_t j = 0; j < op_->points(); ++j)
            integrator.integrate(std::span<double>(u).subspan(j * m, m), t0, t0 + dt);
        return u;
    }

    RadauOptions options() const
    {
        RadauOptions o;
        o.rtol = cfg_.rtol;
        o.atol = cfg_.atol;
        o.max_steps = cfg_.max_internal_steps;
        o.newton_tol = cfg_.newton_tol;
        o.newton_max_iters = cfg_.newton_max_iters;
        return o;
    }

private:
    std::shared_ptr<const RhsOperator> op_;
    SubsolverConfig cfg_;
};

/// Integrates the linear part du/dt = F1(u) with the Dormand-Prince 5(4)
/// pair. Internal steps never exceed 2 / rho(dF1/du), which for the order-2
/// Laplacian is dx^2 / (2 max D); the pair is stable up to about 3.3 / rho.
class DiffusionPropagator final : public Propagator {
public:
    DiffusionPropagator(std::shared_ptr<const RhsOperator> op, SubsolverConfig cfg)
        : op_(std::move(op)), cfg_(cfg)
    {
        detail::require(op_ != nullptr, "DiffusionPropagator: null operator");
        cfg_.validate();
    }

    double stability_cap() const
    {
        const double rho = op_->diffusion_spectral_radius();
        return rho > 0.0 ? 2.0 / rho : std::numeric_limits<double>::infinity();
    }

    State advance(std::span<const double> u0, double t0, double dt) const override
    {
        detail::require(u0.size() == op_->size(), "DiffusionPropagator: state size mismatch");
        detail::require(dt >= 0.0, "DiffusionPropagator: negative step");
        State y(u0.begin(), u0.end());
        if (dt == 0.0) return y;

        // Dormand-Prince 5(4), FSAL.
        static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
        static constexpr double a21 = 1.0 / 5;
        static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
        static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
        static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                                a54 = -212.0 / 729;
        static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                                a64 = 49.0 / 176, a65 = -5103.0 / 18656;
        static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                                a75 = -2187.0 / 6784, a76 = 11.0 / 84;
        static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                                e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

        const std::size_t n = y.size();
        std::array<State, 7> k;
        for (auto& v : k) v.assign(n, 0.0);
        State tmp(n), ynew(n), err(n);
        auto F = [&](double t, const State& u, State& out) { op_->diffusion(t, u, out); };

        const double cap = stability_cap();
        const double t1 = t0 + dt;
        double t = t0;
        double h = std::min(dt, cap);
        bool rejected = false;
        std::size_t steps = 0;
        F(t, y, k[0]);
        while (t < t1) {
            if (++steps > cfg_.max_internal_steps)
                throw StepLimitExceeded("DiffusionPropagator: step budget exhausted");
            bool last = false;
            const double snap = std::max(1e-12 * dt, 1e3 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t1), dt));
            if (t + h >= t1 || (t1 - t - h) <= snap) {
                h = t1 - t;
                last = true;
            }
            const double tiny = 1e3 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), dt);
            if (!(h > tiny)) throw StepUnderflow("DiffusionPropagator: step size underflow");

            for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * a21 * k[0][i];
            F(t + c2 * h, tmp, k[1]);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a31 * k[0][i] + a32 * k[1][i]);
            F(t + c3 * h, tmp, k[2]);
            for (std::size_t i = 0; i < n; ++i)
                tmp[i] = y[i] + h * (a41 * k[0][i] + a42 * k[1][i] + a43 * k[2][i]);
            F(t + c4 * h, tmp, k[3]);
            for (std::size_t i = 0; i < n; ++i)
                tmp[i] = y[i] + h * (a51 * k[0][i] + a52 * k[1][i] + a53 * k[2][i] + a54 * k[3][i]);
            F(t + c5 * h, tmp, k[4]);
            for (std::size_t i = 0; i < n; ++i)
                tmp[i] = y[i] + h * (a61 * k[0][i] + a62 * k[1][i] + a63 * k[2][i] + a64 * k[3][i] +
                                     a65 * k[4][i]);
            F(t + h, tmp, k[5]);
            for (std::size_t i = 0; i < n; ++i)
                ynew[i] = y[i] + h * (a71 * k[0][i] + a73 * k[2][i] + a74 * k[3][i] + a75 * k[4][i] +
                                      a76 * k[5][i]);
            F(t + h, ynew, k[6]);
            for (std::size_t i = 0; i < n; ++i)
                err[i] = h * (e1 * k[0][i] + e3 * k[2][i] + e4 * k[3][i] + e5 * k[4][i] + e6 * k[5][i] +
                              e7 * k[6][i]);
            const double en = weighted_rms(err, y, ynew, cfg_.rtol, cfg_.atol);
            if (!std::isfinite(en)) throw StepUnderflow("DiffusionPropagator: non-finite error estimate");
            double fac = en > 0.0 ? 0.9 * std::pow(en, -0.2) : 5.0;
            if (en <= 1.0) {
                y.swap(ynew);
                k[0].swap(k[6]);
                t = last ? t1 : t + h;
                if (rejected) fac = std::min(fac, 1.0);
                rejected = false;
                h = std::min(cap, h * std::clamp(fac, 0.2, 5.0));
            } else {
                rejected = true;
                h *= std::clamp(fac, 0.2, 1.0);
            }
        }
        return y;
    }

private:
    std::shared_ptr<const RhsOperator> op_;
    SubsolverConfig cfg_;
};

/// Propagator for du/dt = F2(u): pointwise adaptive RadauIIA.
inline PropagatorPtr reaction_propagator(std::shared_ptr<const RhsOperator> op, SubsolverConfig cfg = {})
{
    return std::make_shared<ReactionPropagator>(std::move(op), cfg);
}

/// Propagator for du/dt = F1(u): stability-capped explicit Dormand-Prince.
inline PropagatorPtr diffusion_propagator(std::shared_ptr<const RhsOperator> op, SubsolverConfig cfg = {})
{
    return std::make_shared<DiffusionPropagator>(std::move(op), cfg);
}

} // namespace dcs
