#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dcs/errors.hpp"
#include "dcs/state.hpp"

namespace dcs {

/// Butcher tableau of an s-stage collocation method. Only s = 3 is provided.
struct ButcherTableau {
    static constexpr std::size_t max_stages = 3;

    std::size_t s = 0;
    std::array<std::array<double, max_stages>, max_stages> A{};
    std::array<double, max_stages> b{};
    std::array<double, max_stages> c{};
    int p = 0; ///< global order
    int q = 0; ///< stage order

    /// a_{ij} with the convention a_{0j} = 0 (1-based row index i).
    double a_row(std::size_t i, std::size_t j) const { return i == 0 ? 0.0 : A[i - 1][j]; }

    /// c_i with c_0 = 0 (1-based).
    double node(std::size_t i) const { return i == 0 ? 0.0 : c[i - 1]; }
};

/// The 3-stage RadauIIA collocation tableau (p = 5, q = 3), evaluated from
/// its closed-form expressions in sqrt(6).
inline ButcherTableau radau_iia_3()
{
    const double r6 = std::sqrt(6.0);
    ButcherTableau t;
    t.s = 3;
    t.c = {(4.0 - r6) / 10.0, (4.0 + r6) / 10.0, 1.0};
    t.A[0] = {(88.0 - 7.0 * r6) / 360.0, (296.0 - 169.0 * r6) / 1800.0, (-2.0 + 3.0 * r6) / 225.0};
    t.A[1] = {(296.0 + 169.0 * r6) / 1800.0, (88.0 + 7.0 * r6) / 360.0, (-2.0 - 3.0 * r6) / 225.0};
    t.A[2] = {(16.0 - r6) / 36.0, (16.0 + r6) / 36.0, 1.0 / 9.0};
    t.b = t.A[2];
    t.p = 5;
    t.q = 3;
    return t;
}

/// Node solutions over one step together with the cached right-hand side
/// evaluated at each of them: rhs[j] = F(t0 + c_j dt, nodes[j]).
struct StageSet {
    std::vector<State> nodes;
    std::vector<State> rhs;
    double t0 = 0.0;
    double dt = 0.0;

    std::size_t stages() const { return nodes.size(); }
    std::size_t state_size() const { return nodes.empty() ? 0 : nodes.front().size(); }
    bool rhs_ready() const { return !rhs.empty() && rhs.size() == nodes.size(); }
};

/// I_{t_{i-1}}^{t_i}(U) = dt * sum_j (a_ij - a_{i-1,j}) rhs[j], i in [1, s],
/// with I_{t_0}^{t_0} = 0. Summation runs over j ascending.
inline State stage_increment(const ButcherTableau& tab, const StageSet& stages, std::size_t i)
{
    if (i < 1 || i > tab.s) throw InvalidArgument("stage_increment: stage index out of range");
    detail::require(stages.rhs.size() == tab.s, "stage_increment: rhs cache not populated");
    State out(stages.state_size(), 0.0);
    for (std::size_t j = 0; j < tab.s; ++j) {
        const double w = stages.dt * (tab.a_row(i, j) - tab.a_row(i - 1, j));
        const State& f = stages.rhs[j];
        for (std::size_t n = 0; n < out.size(); ++n) out[n] += w * f[n];
    }
    return out;
}

/// I_{t_0}^{t_s}(U) = dt * sum_j b_j rhs[j].
inline State full_step_increment(const ButcherTableau& tab, const StageSet& stages)
{
    detail::require(stages.rhs.size() == tab.s, "full_step_increment: rhs cache not populated");
    State out(stages.state_size(), 0.0);
    for (std::size_t j = 0; j < tab.s; ++j) {
        const double w = stages.dt * tab.b[j];
        const State& f = stages.rhs[j];
        for (std::size_t n = 0; n < out.size(); ++n) out[n] += w * f[n];
    }
    return out;
}

} // namespace dcs
