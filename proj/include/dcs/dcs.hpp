#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "dcs/errors.hpp"
#include "dcs/problems.hpp"
#include "dcs/quadrature.hpp"
#include "dcs/rhs.hpp"
#include "dcs/splitting.hpp"
#include "dcs/state.hpp"
#include "dcs/subsolvers.hpp"

namespace dcs {

/// Iterate k of the scheme over one step [t0, t0 + dt].
struct DcsState {
    ButcherTableau tableau;
    int k = 0;
    double t0 = 0.0;
    double dt = 0.0;
    State u0;
    StageSet u_tilde; ///< nodes and the cached coupled RHS at each node
    StageSet u_hat;   ///< quadrature predictions that produced u_tilde (empty for k = 0)

    const State& last_node() const { return u_tilde.nodes.back(); }
};

struct DcsCounters {
    std::size_t splitting_steps = 0;
    std::size_t rhs_evals = 0;
};

/// Deferred-correction splitting iteration: splitting sweeps across the
/// collocation nodes corrected towards the RadauIIA(3) solution.
///
/// In hybrid mode the splitting propagators are built from a low-order
/// spatial operator while the RHS cache feeding the quadrature uses a
/// high-order one.
class DcsIntegrator {
public:
    DcsIntegrator(SplittingScheme scheme, PropagatorPtr diffusion, PropagatorPtr reaction,
                  std::shared_ptr<const RhsOperator> quadrature_rhs, ButcherTableau tab = radau_iia_3())
        : scheme_(scheme), diffusion_(std::move(diffusion)), reaction_(std::move(reaction)),
          rhs_(std::move(quadrature_rhs)), tab_(tab)
    {
        detail::require(diffusion_ && reaction_ && rhs_, "DcsIntegrator: null component");
        detail::require(tab_.s >= 1 && tab_.c[tab_.s - 1] == 1.0, "DcsIntegrator: tableau must be stiffly accurate");
    }

    DcsIntegrator(const DcsIntegrator& o)
        : scheme_(o.scheme_), diffusion_(o.diffusion_), reaction_(o.reaction_), rhs_(o.rhs_), tab_(o.tab_),
          hybrid_(o.hybrid_), splits_(o.splits_.load()), rhs_evals_(o.rhs_evals_.load())
    {
    }
    DcsIntegrator& operator=(const DcsIntegrator&) = delete;

    /// Standard configuration: both propagators and the quadrature share `rhs`.
    static DcsIntegrator from_rhs(std::shared_ptr<const RhsOperator> rhs, SplittingScheme scheme,
                                  const SubsolverConfig& sub = {})
    {
        return DcsIntegrator(scheme, diffusion_propagator(rhs, sub), reaction_propagator(rhs, sub), rhs);
    }

    static DcsIntegrator for_problem(const ProblemSpec& problem, SplittingScheme scheme,
                                     const SubsolverConfig& sub = {})
    {
        return from_rhs(problem.rhs, scheme, sub);
    }

    /// Splitting sub-flows from `rhs_low`, quadrature sums from `rhs_high`.
    void set_hybrid(std::shared_ptr<const RhsOperator> rhs_high, std::shared_ptr<const RhsOperator> rhs_low,
                    const SubsolverConfig& sub = {})
    {
        detail::require(rhs_high && rhs_low, "hybrid mode: null operator");
        check_same_grid(*rhs_high, *rhs_low);
        diffusion_ = diffusion_propagator(rhs_low, sub);
        reaction_ = reaction_propagator(rhs_low, sub);
        rhs_ = std::move(rhs_high);
        hybrid_ = true;
    }

    bool hybrid() const { return hybrid_; }
    const SplittingScheme& scheme() const { return scheme_; }
    const ButcherTableau& tableau() const { return tab_; }
    const RhsOperator& rhs() const { return *rhs_; }
    std::shared_ptr<const RhsOperator> rhs_ptr() const { return rhs_; }

    DcsCounters counters() const { return {splits_.load(), rhs_evals_.load()}; }
    void reset_counters()
    {
        splits_ = 0;
        rhs_evals_ = 0;
    }

    /// One splitting step S^{dt} starting at t.
    State split(std::span<const double> u, double t, double dt) const
    {
        ++splits_;
        return splitting_step(scheme_, *diffusion_, *reaction_, u, t, dt);
    }

    /// u~^0_1 = S^{c1 dt} u0, u~^0_i = S^{(c_i - c_{i-1}) dt} u~^0_{i-1}.
    DcsState initial_sweep(std::span<const double> u0, double t0, double dt) const
    {
        detail::require(dt > 0.0, "initial_sweep: dt must be positive");
        detail::require(u0.size() == rhs_->size(), "initial_sweep: state size mismatch");
        DcsState st = empty_state(u0, t0, dt);
        State prev(u0.begin(), u0.end());
        for (std::size_t i = 1; i <= tab_.s; ++i) {
            const double ti = t0 + tab_.node(i - 1) * dt;
            prev = split(prev, ti, (tab_.node(i) - tab_.node(i - 1)) * dt);
            st.u_tilde.nodes[i - 1] = prev;
        }
        fill_rhs(st.u_tilde);
        return st;
    }

    /// u^_i = u~_{i-1} + I_{t_{i-1}}^{t_i}(U~), with u~_0 = u0.
    StageSet quadrature_predict(const DcsState& st) const
    {
        detail::require(st.u_tilde.rhs_ready(), "quadrature_predict: rhs cache not populated");
        StageSet hat;
        hat.t0 = st.t0;
        hat.dt = st.dt;
        hat.nodes.resize(tab_.s);
        for (std::size_t i = 1; i <= tab_.s; ++i) {
            const State& base = i == 1 ? st.u0 : st.u_tilde.nodes[i - 2];
            State v = stage_increment(tab_, st.u_tilde, i);
            for (std::size_t n = 0; n < v.size(); ++n) v[n] += base[n];
            hat.nodes[i - 1] = std::move(v);
        }
        return hat;
    }

    /// u~^{k+1}_1 = u^_1; u~^{k+1}_i = u^_i + S(u~^{k+1}_{i-1}) - S(u~^k_{i-1}).
    DcsState correction_sweep(const DcsState& st) const
    {
        detail::require(st.k >= 0 && st.u_tilde.rhs_ready(), "correction_sweep: incoherent state");
        DcsState next = empty_state(st.u0, st.t0, st.dt);
        next.k = st.k + 1;
        next.u_hat = quadrature_predict(st);
        next.u_tilde.nodes[0] = next.u_hat.nodes[0];
        eval_rhs(next.u_tilde, 0);
        for (std::size_t i = 2; i <= tab_.s; ++i) {
            const double ti = st.t0 + tab_.node(i - 1) * st.dt;
            const double h = (tab_.node(i) - tab_.node(i - 1)) * st.dt;
            const State fresh = split(next.u_tilde.nodes[i - 2], ti, h);
            const State stale = split(st.u_tilde.nodes[i - 2], ti, h);
            State v = next.u_hat.nodes[i - 1];
            for (std::size_t n = 0; n < v.size(); ++n) v[n] += fresh[n] - stale[n];
            next.u_tilde.nodes[i - 1] = std::move(v);
            eval_rhs(next.u_tilde, i - 1);
        }
        return next;
    }

    /// Initial sweep followed by k corrections; every iterate is returned.
    std::vector<DcsState> iterate(std::span<const double> u0, double t0, double dt, int k) const
    {
        detail::require(k >= 0, "iterate: k must be >= 0");
        std::vector<DcsState> out;
        out.push_back(initial_sweep(u0, t0, dt));
        for (int j = 0; j < k; ++j) out.push_back(correction_sweep(out.back()));
        return out;
    }

    /// Fixed-step integration over [t0, tf] with k corrections per step.
    State integrate_fixed(std::span<const double> u0, double t0, double tf, std::size_t steps, int k) const
    {
        detail::require(tf > t0 && steps >= 1, "integrate_fixed: empty interval");
        State u(u0.begin(), u0.end());
        const double dt = (tf - t0) / static_cast<double>(steps);
        for (std::size_t n = 0; n < steps; ++n) {
            const double t = t0 + static_cast<double>(n) * dt;
            const double h = n + 1 == steps ? tf - t : dt;
            DcsState st = initial_sweep(u, t, h);
            for (int j = 0; j < k; ++j) st = correction_sweep(st);
            u = st.last_node();
        }
        return u;
    }

private:
    static void check_same_grid(const RhsOperator& a, const RhsOperator& b)
    {
        if (a.points() != b.points() || a.species() != b.species())
            throw InvalidArgument("hybrid mode: operators act on different grids");
        const auto* ba = dynamic_cast<const BzRhs*>(&a);
        const auto* bb = dynamic_cast<const BzRhs*>(&b);
        if (ba && bb && (ba->grid().x0 != bb->grid().x0 || ba->grid().x1 != bb->grid().x1))
            throw InvalidArgument("hybrid mode: operators act on different grids");
    }

    DcsState empty_state(std::span<const double> u0, double t0, double dt) const
    {
        DcsState st;
        st.tableau = tab_;
        st.t0 = t0;
        st.dt = dt;
        st.u0.assign(u0.begin(), u0.end());
        st.u_tilde.t0 = t0;
        st.u_tilde.dt = dt;
        st.u_tilde.nodes.assign(tab_.s, State());
        st.u_tilde.rhs.assign(tab_.s, State());
        return st;
    }

    void eval_rhs(StageSet& set, std::size_t j) const
    {
        set.rhs[j].assign(set.nodes[j].size(), 0.0);
        rhs_->apply(set.t0 + tab_.c[j] * set.dt, set.nodes[j], set.rhs[j]);
        ++rhs_evals_;
    }

    void fill_rhs(StageSet& set) const
    {
        for (std::size_t j = 0; j < tab_.s; ++j) eval_rhs(set, j);
    }

    SplittingScheme scheme_;
    PropagatorPtr diffusion_;
    PropagatorPtr reaction_;
    std::shared_ptr<const RhsOperator> rhs_;
    ButcherTableau tab_;
    bool hybrid_ = false;
    mutable std::atomic<std::size_t> splits_{0};
    mutable std::atomic<std::size_t> rhs_evals_{0};
};

} // namespace dcs
