#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dcs/linalg.hpp"
#include "dcs/state.hpp"

namespace dcs {

/// Semi-discrete right-hand side F = F1 + F2 on N points with m species.
///
/// F1 is the linear transport part (diffusion for reaction-diffusion
/// problems) and F2 a reaction term acting on each grid point independently.
/// The split propagators rely on exactly this structure.
class RhsOperator {
public:
    virtual ~RhsOperator() = default;

    virtual std::size_t points() const = 0;
    virtual std::size_t species() const = 0;
    std::size_t size() const { return points() * species(); }

    /// out = F1(u).
    virtual void diffusion(double t, std::span<const double> u, std::span<double> out) const = 0;

    /// out = F2 restricted to one point; `u` and `out` have `species()` entries.
    virtual void reaction_point(double t, std::span<const double> u, std::span<double> out) const = 0;

    /// Row-major m x m Jacobian of reaction_point.
    virtual void reaction_jacobian_point(double t, std::span<const double> u,
                                         std::span<double> jac) const = 0;

    /// Upper bound on the spectral radius of dF1/du (explicit stability cap).
    virtual double diffusion_spectral_radius() const = 0;

    /// Number of neighbouring points coupled by F1 on each side.
    virtual std::size_t diffusion_halfwidth() const = 0;

    /// Adds dF1/du into `jac`, which must cover bandwidth().
    virtual void add_diffusion_jacobian(BandMatrix& jac) const = 0;

    /// Half bandwidth of dF/du in the point-major layout.
    std::size_t bandwidth() const { return diffusion_halfwidth() * species() + species() - 1; }

    /// out = F2(u), pointwise over the grid.
    void reaction(double t, std::span<const double> u, std::span<double> out) const
    {
        const std::size_t m = species();
        for (std::size_t j = 0; j < points(); ++j)
            reaction_point(t, u.subspan(j * m, m), out.subspan(j * m, m));
    }

    /// out = F1(u) + F2(u).
    void apply(double t, std::span<const double> u, std::span<double> out) const
    {
        diffusion(t, u, out);
        const std::size_t m = species();
        std::vector<double> r(m);
        for (std::size_t j = 0; j < points(); ++j) {
            reaction_point(t, u.subspan(j * m, m), r);
            for (std::size_t c = 0; c < m; ++c) out[j * m + c] += r[c];
        }
    }

    State operator()(double t, std::span<const double> u) const
    {
        State out(u.size());
        apply(t, u, out);
        return out;
    }

    /// Analytic banded Jacobian dF/du at u (overwrites `jac`).
    void jacobian(double t, std::span<const double> u, BandMatrix& jac) const
    {
        jac.set_zero();
        add_diffusion_jacobian(jac);
        const std::size_t m = species();
        std::vector<double> block(m * m);
        for (std::size_t j = 0; j < points(); ++j) {
            reaction_jacobian_point(t, u.subspan(j * m, m), block);
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < m; ++c) jac(j * m + r, j * m + c) += block[r * m + c];
        }
    }
};

} // namespace dcs
