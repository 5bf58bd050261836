#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "dcs/errors.hpp"
#include "dcs/state.hpp"

namespace dcs {

/// Uniform vertex-centred grid on [x0, x1] with homogeneous Neumann ends.
struct Grid1D {
    std::size_t n = 0;
    double x0 = 0.0;
    double x1 = 1.0;

    Grid1D() = default;
    Grid1D(std::size_t points, double left, double right) : n(points), x0(left), x1(right)
    {
        detail::require(points >= 5, "Grid1D: at least 5 points are required");
        detail::require(right > left, "Grid1D: empty domain");
    }

    double dx() const { return (x1 - x0) / static_cast<double>(n - 1); }
    double x(std::size_t j) const { return x0 + dx() * static_cast<double>(j); }
};

/// One row of the discrete Laplacian: up to five (column, weight) pairs.
struct StencilRow {
    std::array<std::size_t, 5> col{};
    std::array<double, 5> w{};
    std::size_t len = 0;

    void add(std::size_t c, double v)
    {
        for (std::size_t k = 0; k < len; ++k) {
            if (col[k] == c) {
                w[k] += v;
                return;
            }
        }
        col[len] = c;
        w[len] = v;
        ++len;
    }
};

namespace detail {

/// Index of the mirror image of j across the nearest boundary point.
inline std::size_t reflect(long j, std::size_t n)
{
    const long last = static_cast<long>(n) - 1;
    if (j < 0) j = -j;
    if (j > last) j = 2 * last - j;
    return static_cast<std::size_t>(j);
}

inline void check_order(int order)
{
    if (order != 2 && order != 4) throw InvalidArgument("laplacian: order must be 2 or 4");
}

} // namespace detail

/// Stencil half-width (in grid points) of the centred Laplacian of `order`.
inline std::size_t laplacian_halfwidth(int order)
{
    detail::check_order(order);
    return order == 2 ? 1 : 2;
}

/// Row j of D * Laplacian. Boundary rows fold the ghost values u_{-k} = u_k
/// back onto the grid (symmetric extension, zero flux).
inline StencilRow laplacian_row(int order, const Grid1D& grid, double D, std::size_t j)
{
    detail::check_order(order);
    const double h2 = grid.dx() * grid.dx();
    StencilRow row;
    const long jj = static_cast<long>(j);
    if (order == 2) {
        const double s = D / h2;
        row.add(detail::reflect(jj - 1, grid.n), s);
        row.add(j, -2.0 * s);
        row.add(detail::reflect(jj + 1, grid.n), s);
    } else {
        const double s = D / (12.0 * h2);
        row.add(detail::reflect(jj - 2, grid.n), -s);
        row.add(detail::reflect(jj - 1, grid.n), 16.0 * s);
        row.add(j, -30.0 * s);
        row.add(detail::reflect(jj + 1, grid.n), 16.0 * s);
        row.add(detail::reflect(jj + 2, grid.n), -s);
    }
    return row;
}

/// Applies D * Laplacian to the strided field in[offset + stride * j] and
/// writes (or accumulates, when `accumulate`) into `out` with the same layout.
inline void apply_laplacian(int order, const Grid1D& grid, double D,
                            std::span<const double> in, std::span<double> out,
                            std::size_t stride = 1, std::size_t offset = 0,
                            bool accumulate = false)
{
    detail::check_order(order);
    detail::require(in.size() == grid.n * stride && out.size() == in.size(),
                    "laplacian: field length does not match grid");
    const std::size_t hw = laplacian_halfwidth(order);
    const double h2 = grid.dx() * grid.dx();
    auto at = [&](std::size_t j) { return in[offset + stride * j]; };
    auto put = [&](std::size_t j, double v) {
        double& dst = out[offset + stride * j];
        dst = accumulate ? dst + v : v;
    };
    auto boundary = [&](std::size_t j) {
        const StencilRow row = laplacian_row(order, grid, D, j);
        double acc = 0.0;
        for (std::size_t k = 0; k < row.len; ++k) acc += row.w[k] * at(row.col[k]);
        put(j, acc);
    };
    for (std::size_t j = 0; j < hw; ++j) boundary(j);
    if (order == 2) {
        const double s = D / h2;
        for (std::size_t j = 1; j + 1 < grid.n; ++j)
            put(j, s * ((at(j - 1) + at(j + 1)) - 2.0 * at(j)));
    } else {
        const double s = D / (12.0 * h2);
        for (std::size_t j = 2; j + 2 < grid.n; ++j)
            put(j, s * (16.0 * (at(j - 1) + at(j + 1)) - (at(j - 2) + at(j + 2)) - 30.0 * at(j)));
    }
    for (std::size_t j = grid.n - hw; j < grid.n; ++j) boundary(j);
}

/// D * Laplacian of a scalar field sampled on `grid`.
inline std::vector<double> laplacian(int order, const Grid1D& grid, double D,
                                     std::span<const double> u)
{
    if (u.size() != grid.n) throw InvalidArgument("laplacian: field length does not match grid");
    std::vector<double> out(u.size());
    apply_laplacian(order, grid, D, u, out);
    return out;
}

/// Gershgorin bound on the spectral radius of D * Laplacian.
inline double laplacian_spectral_bound(int order, const Grid1D& grid, double D)
{
    detail::check_order(order);
    const double h2 = grid.dx() * grid.dx();
    return (order == 2 ? 4.0 : 64.0 / 12.0) * D / h2;
}

/// Nested grids: true when `coarse` is `fine` with every stride-th point kept.
inline bool nested_in(const Grid1D& coarse, const Grid1D& fine)
{
    if (coarse.x0 != fine.x0 || coarse.x1 != fine.x1 || coarse.n > fine.n) return false;
    return (fine.n - 1) % (coarse.n - 1) == 0;
}

/// Index subsampling of a point-major field with m components.
inline std::vector<double> restrict_nested(const Grid1D& fine, const Grid1D& coarse, std::span<const double> u,
                                           std::size_t m)
{
    detail::require(nested_in(coarse, fine), "restrict_nested: grids are not nested");
    detail::require(u.size() == fine.n * m, "restrict_nested: field size mismatch");
    const std::size_t stride = (fine.n - 1) / (coarse.n - 1);
    std::vector<double> out(coarse.n * m);
    for (std::size_t j = 0; j < coarse.n; ++j)
        for (std::size_t c = 0; c < m; ++c) out[j * m + c] = u[j * stride * m + c];
    return out;
}

} // namespace dcs
