#pragma once

#include <span>
#include <string>

#include "dcs/errors.hpp"
#include "dcs/state.hpp"
#include "dcs/subsolvers.hpp"

namespace dcs {

enum class SplitKind { lie, strang };
enum class SplitOrdering { reaction_last, diffusion_last };

struct SplittingScheme {
    SplitKind kind = SplitKind::lie;
    SplitOrdering ordering = SplitOrdering::reaction_last;

    static SplittingScheme lie(SplitOrdering o = SplitOrdering::reaction_last) { return {SplitKind::lie, o}; }
    static SplittingScheme strang(SplitOrdering o = SplitOrdering::reaction_last) { return {SplitKind::strang, o}; }

    /// Classical order of the splitting (p-hat).
    int order_hat() const { return kind == SplitKind::lie ? 1 : 2; }

    std::string name() const
    {
        std::string s = kind == SplitKind::lie ? "lie" : "strang";
        return s + (ordering == SplitOrdering::reaction_last ? "" : "-diffusion-last");
    }
};

inline SplitKind parse_split_kind(const std::string& s)
{
    if (s == "lie") return SplitKind::lie;
    if (s == "strang") return SplitKind::strang;
    throw InvalidArgument("unknown splitting scheme '" + s + "'");
}

inline SplitOrdering parse_split_ordering(const std::string& s)
{
    if (s == "reaction-last") return SplitOrdering::reaction_last;
    if (s == "diffusion-last") return SplitOrdering::diffusion_last;
    throw InvalidArgument("unknown splitting ordering '" + s + "'");
}

/// One splitting step of length dt. With reaction-last ordering
///   Lie:    R^{dt} D^{dt} u0
///   Strang: R^{dt/2} D^{dt} R^{dt/2} u0
/// (rightmost acts first); diffusion-last swaps the roles of D and R.
inline State splitting_step(const SplittingScheme& scheme, const Propagator& diffusion, const Propagator& reaction,
                            std::span<const double> u0, double t0, double dt)
{
    detail::require(dt >= 0.0, "splitting_step: negative step");
    if (dt == 0.0) return State(u0.begin(), u0.end());
    const bool rlast = scheme.ordering == SplitOrdering::reaction_last;
    const Propagator& first = rlast ? diffusion : reaction;
    const Propagator& last = rlast ? reaction : diffusion;
    if (scheme.kind == SplitKind::lie) {
        const State v = first.advance(u0, t0, dt);
        return last.advance(v, t0, dt);
    }
    const double half = 0.5 * dt;
    const State v = last.advance(u0, t0, half);
    const State w = first.advance(v, t0, dt);
    return last.advance(w, t0 + half, half);
}

} // namespace dcs
