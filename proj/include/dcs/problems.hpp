#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dcs/errors.hpp"
#include "dcs/linalg.hpp"
#include "dcs/reference.hpp"
#include "dcs/rhs.hpp"
#include "dcs/spatial.hpp"
#include "dcs/state.hpp"

namespace dcs {

/// Parameters of the three-species BZ model. `q_bz` is the kinetic
/// parameter q (renamed so it cannot be confused with a stage order).
struct BzParams {
    double eps = 1e-2;
    double mu = 1e-5;
    double f = 1.6;
    double q_bz = 2e-3;
    double Da = 2.5e-3;
    double Db = 2.5e-3;
    double Dc = 1.5e-3;

    void validate() const
    {
        detail::require(mu > 0.0 && mu < eps && eps < 1.0, "BzParams: requires 0 < mu < eps < 1");
        detail::require(f > 0.0 && q_bz > 0.0, "BzParams: f and q_bz must be positive");
        detail::require(Da > 0.0 && Db > 0.0 && Dc > 0.0, "BzParams: diffusion coefficients must be positive");
    }

    std::array<double, 3> diffusivities() const { return {Da, Db, Dc}; }
};

inline std::array<double, 3> bz_reaction(const BzParams& p, double a, double b, double c)
{
    return {(-p.q_bz * a - a * b + p.f * c) / p.mu,
            (p.q_bz * a - a * b + b * (1.0 - b)) / p.eps,
            b - c};
}

/// Row-major 3x3 Jacobian of bz_reaction.
inline std::array<double, 9> bz_reaction_jacobian(const BzParams& p, double a, double b, double)
{
    return {(-p.q_bz - b) / p.mu, -a / p.mu, p.f / p.mu,
            (p.q_bz - b) / p.eps, (1.0 - a - 2.0 * b) / p.eps, 0.0,
            0.0, 1.0, -1.0};
}

/// Semi-discrete BZ system: F1 = D * Laplacian per species, F2 = kinetics.
class BzRhs final : public RhsOperator {
public:
    BzRhs(BzParams params, Grid1D grid, int spatial_order)
        : p_(params), grid_(grid), order_(spatial_order)
    {
        p_.validate();
        laplacian_halfwidth(order_);
    }

    const BzParams& params() const { return p_; }
    const Grid1D& grid() const { return grid_; }
    int spatial_order() const { return order_; }

    std::size_t points() const override { return grid_.n; }
    std::size_t species() const override { return 3; }

    void diffusion(double, std::span<const double> u, std::span<double> out) const override
    {
        const auto D = p_.diffusivities();
        for (std::size_t c = 0; c < 3; ++c) apply_laplacian(order_, grid_, D[c], u, out, 3, c);
    }

    void reaction_point(double, std::span<const double> u, std::span<double> out) const override
    {
        const auto r = bz_reaction(p_, u[0], u[1], u[2]);
        out[0] = r[0];
        out[1] = r[1];
        out[2] = r[2];
    }

    void reaction_jacobian_point(double, std::span<const double> u, std::span<double> jac) const override
    {
        const auto J = bz_reaction_jacobian(p_, u[0], u[1], u[2]);
        std::copy(J.begin(), J.end(), jac.begin());
    }

    double diffusion_spectral_radius() const override
    {
        return laplacian_spectral_bound(order_, grid_, std::max({p_.Da, p_.Db, p_.Dc}));
    }

    std::size_t diffusion_halfwidth() const override { return laplacian_halfwidth(order_); }

    void add_diffusion_jacobian(BandMatrix& jac) const override
    {
        const auto D = p_.diffusivities();
        for (std::size_t j = 0; j < grid_.n; ++j)
            for (std::size_t c = 0; c < 3; ++c) {
                const StencilRow row = laplacian_row(order_, grid_, D[c], j);
                for (std::size_t k = 0; k < row.len; ++k) jac(3 * j + c, 3 * row.col[k] + c) += row.w[k];
            }
    }

private:
    BzParams p_;
    Grid1D grid_;
    int order_;
};

/// Single-point linear system u' = (A1 + A2) u with F1 = A1 u, F2 = A2 u.
class LinearSplitRhs final : public RhsOperator {
public:
    /// A1, A2: row-major m x m.
    LinearSplitRhs(std::size_t m, std::vector<double> A1, std::vector<double> A2)
        : m_(m), A1_(std::move(A1)), A2_(std::move(A2))
    {
        detail::require(m_ >= 1 && A1_.size() == m_ * m_ && A2_.size() == m_ * m_,
                        "LinearSplitRhs: matrices must be m x m");
    }

    std::size_t points() const override { return 1; }
    std::size_t species() const override { return m_; }
    const std::vector<double>& a1() const { return A1_; }
    const std::vector<double>& a2() const { return A2_; }

    void diffusion(double, std::span<const double> u, std::span<double> out) const override { mul(A1_, u, out); }
    void reaction_point(double, std::span<const double> u, std::span<double> out) const override { mul(A2_, u, out); }
    void reaction_jacobian_point(double, std::span<const double>, std::span<double> jac) const override
    {
        std::copy(A2_.begin(), A2_.end(), jac.begin());
    }

    double diffusion_spectral_radius() const override
    {
        double r = 0.0;
        for (std::size_t i = 0; i < m_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < m_; ++j) s += std::abs(A1_[i * m_ + j]);
            r = std::max(r, s);
        }
        return r;
    }

    std::size_t diffusion_halfwidth() const override { return 0; }

    void add_diffusion_jacobian(BandMatrix& jac) const override
    {
        for (std::size_t i = 0; i < m_; ++i)
            for (std::size_t j = 0; j < m_; ++j) jac(i, j) += A1_[i * m_ + j];
    }

private:
    void mul(const std::vector<double>& A, std::span<const double> u, std::span<double> out) const
    {
        for (std::size_t i = 0; i < m_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < m_; ++j) s += A[i * m_ + j] * u[j];
            out[i] = s;
        }
    }

    std::size_t m_;
    std::vector<double> A1_, A2_;
};

/// exp(t M) v for a small dense row-major matrix (scaling and squaring on a
/// truncated Taylor series).
inline State expm_apply(std::size_t m, std::span<const double> M, double t, std::span<const double> v)
{
    detail::require(M.size() == m * m && v.size() == m, "expm_apply: size mismatch");
    double nrm = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += std::abs(M[i * m + j] * t);
        nrm = std::max(nrm, s);
    }
    int squarings = 0;
    while (nrm > 0.25) {
        nrm *= 0.5;
        ++squarings;
    }
    const double scale = t / std::ldexp(1.0, squarings);
    std::vector<double> X(m * m), E(m * m, 0.0), term(m * m, 0.0), tmp(m * m);
    for (std::size_t i = 0; i < m * m; ++i) X[i] = M[i] * scale;
    for (std::size_t i = 0; i < m; ++i) E[i * m + i] = term[i * m + i] = 1.0;
    auto matmul = [m](const std::vector<double>& A, const std::vector<double>& B, std::vector<double>& C) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < m; ++k) s += A[i * m + k] * B[k * m + j];
                C[i * m + j] = s;
            }
    };
    for (int k = 1; k <= 20; ++k) {
        matmul(term, X, tmp);
        for (std::size_t i = 0; i < m * m; ++i) {
            term[i] = tmp[i] / k;
            E[i] += term[i];
        }
    }
    for (int s = 0; s < squarings; ++s) {
        matmul(E, E, tmp);
        E.swap(tmp);
    }
    State out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i] += E[i * m + j] * v[j];
    return out;
}

/// Everything needed to run a problem: operator, initial data, norm, and
/// (for linear problems) the exact flow.
struct ProblemSpec {
    std::string name;
    std::optional<Grid1D> grid;
    int spatial_order = 2;
    std::size_t species = 1;
    std::shared_ptr<const RhsOperator> rhs;
    double t0 = 0.0;
    State initial_state;
    ErrorNorm norm;
    std::optional<BzParams> bz;
    /// exact(t_start, u_start, t_end); empty when no closed form exists.
    std::function<State(double, std::span<const double>, double)> exact;
    /// Provenance of the initial state, recorded in run manifests.
    std::map<std::string, std::string> metadata;

    double norm_scale(std::span<const double> reference) const { return norm.scale_of(reference, species); }
    double distance(std::span<const double> a, std::span<const double> reference) const
    {
        return norm.distance(a, reference, norm_scale(reference));
    }
};

inline ProblemSpec linear_split_problem(std::string name, std::size_t m, std::vector<double> A1,
                                        std::vector<double> A2, State u0)
{
    detail::require(u0.size() == m, "linear_split_problem: initial state size mismatch");
    auto rhs = std::make_shared<LinearSplitRhs>(m, A1, A2);
    std::vector<double> A(m * m);
    for (std::size_t i = 0; i < m * m; ++i) A[i] = A1[i] + A2[i];
    ProblemSpec p;
    p.name = std::move(name);
    p.species = m;
    p.rhs = rhs;
    p.initial_state = std::move(u0);
    p.exact = [m, A](double ts, std::span<const double> us, double te) { return expm_apply(m, A, te - ts, us); };
    return p;
}

/// u' = (A1 + A2) u with A1 = [[0,1],[0,0]] (F1) and A2 = [[0,0],[1,0]] (F2),
/// u(0) = (1, 0.5). The parts do not commute.
inline ProblemSpec linear2x2_problem()
{
    return linear_split_problem("linear2x2", 2, {0.0, 1.0, 0.0, 0.0}, {0.0, 0.0, 1.0, 0.0}, {1.0, 0.5});
}

/// u' = lambda u split into two equal halves, u(0) = 1.
inline ProblemSpec dahlquist_problem(double lambda)
{
    ProblemSpec p = linear_split_problem("dahlquist", 1, {0.5 * lambda}, {0.5 * lambda}, {1.0});
    p.exact = [lambda](double ts, std::span<const double> us, double te) {
        return State{us[0] * std::exp(lambda * (te - ts))};
    };
    return p;
}

struct BzSetup {
    std::size_t n = 201;
    int spatial_order = 2;
    BzParams params{};
    double seed_width = 0.05;
    /// Time the seeded profile is integrated before it is used; 0.25 leaves a
    /// single developed front near x = 0.24, just before the pulse back forms.
    double spinup = 0.25;
    /// Time label given to the spun-up state (start of the study window).
    double t_start = 0.5;
    double spinup_rtol = 1e-10;
};

/// Homogeneous stationary state of the kinetics: c = b, a = f b / (q_bz + b),
/// b the positive root of b^2 + (f + q_bz - 1) b - q_bz (1 + f) = 0.
inline std::array<double, 3> bz_rest_state(const BzParams& p)
{
    const double beta = p.f + p.q_bz - 1.0;
    const double b = 0.5 * (-beta + std::sqrt(beta * beta + 4.0 * p.q_bz * (1.0 + p.f)));
    return {p.f * b / (p.q_bz + b), b, b};
}

/// Rest state everywhere except b = 1 on [x0, x0 + width].
inline State bz_seed(const BzParams& p, const Grid1D& grid, double width)
{
    const auto rest = bz_rest_state(p);
    State u(3 * grid.n);
    for (std::size_t j = 0; j < grid.n; ++j) {
        u[3 * j] = rest[0];
        u[3 * j + 1] = grid.x(j) <= grid.x0 + width + 1e-12 ? 1.0 : rest[1];
        u[3 * j + 2] = rest[2];
    }
    return u;
}

/// Positions where species b crosses `level`, linearly interpolated.
inline std::vector<double> bz_front_positions(const Grid1D& grid, std::span<const double> u, double level = 0.5)
{
    detail::require(u.size() == 3 * grid.n, "bz_front_positions: state size mismatch");
    std::vector<double> xs;
    for (std::size_t j = 0; j + 1 < grid.n; ++j) {
        const double b0 = u[3 * j + 1] - level;
        const double b1 = u[3 * (j + 1) + 1] - level;
        if ((b0 < 0.0) != (b1 < 0.0)) xs.push_back(grid.x(j) + grid.dx() * b0 / (b0 - b1));
    }
    return xs;
}

/// BZ on [0, 1] with the spun-up travelling-front initial state at t_start.
inline ProblemSpec bz_problem(const BzSetup& setup)
{
    setup.params.validate();
    const Grid1D grid(setup.n, 0.0, 1.0);
    auto rhs = std::make_shared<BzRhs>(setup.params, grid, setup.spatial_order);
    ProblemSpec p;
    p.name = "bz";
    p.grid = grid;
    p.spatial_order = setup.spatial_order;
    p.species = 3;
    p.rhs = rhs;
    p.bz = setup.params;
    p.t0 = setup.t_start;
    p.norm.scale_species = 0;
    State u = bz_seed(setup.params, grid, setup.seed_width);
    if (setup.spinup > 0.0) {
        ReferenceConfig rc;
        rc.rtol = rc.atol = setup.spinup_rtol;
        u = reference_solve(*rhs, rc, 0.0, setup.spinup, u).final_state();
    }
    p.initial_state = std::move(u);
    auto fmt = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    p.metadata["seed"] = "b=1 on [0," + fmt(setup.seed_width) + "], kinetic rest state elsewhere";
    p.metadata["spinup"] = fmt(setup.spinup);
    p.metadata["spinup_rtol"] = fmt(setup.spinup_rtol);
    p.metadata["boundary"] = "neumann-reflection";
    return p;
}

/// BZ problem on an explicit grid with a given state (restarts, nested grids).
inline ProblemSpec bz_problem_from_state(const BzParams& params, const Grid1D& grid, int order, double t0,
                                         State u, std::map<std::string, std::string> metadata = {})
{
    params.validate();
    detail::require(u.size() == 3 * grid.n, "bz_problem_from_state: state size mismatch");
    ProblemSpec p;
    p.name = "bz";
    p.grid = grid;
    p.spatial_order = order;
    p.species = 3;
    p.rhs = std::make_shared<BzRhs>(params, grid, order);
    p.bz = params;
    p.t0 = t0;
    p.norm.scale_species = 0;
    p.initial_state = std::move(u);
    p.metadata = std::move(metadata);
    return p;
}

/// Same grid and state as `base`, with the diffusion operator of another order.
inline ProblemSpec with_spatial_order(const ProblemSpec& base, int order)
{
    detail::require(base.bz.has_value() && base.grid.has_value(), "with_spatial_order: BZ problem required");
    ProblemSpec p = base;
    p.spatial_order = order;
    p.rhs = std::make_shared<BzRhs>(*base.bz, *base.grid, order);
    return p;
}

/// Reference integration of a problem, seeded from its initial state.
inline Trajectory reference_solve(const ProblemSpec& problem, const ReferenceConfig& cfg, double t0, double tf,
                                  std::span<const double> u0, std::vector<double> checkpoints = {})
{
    detail::require(problem.rhs != nullptr, "reference_solve: problem has no operator");
    return reference_solve(*problem.rhs, cfg, t0, tf, u0, std::move(checkpoints));
}

} // namespace dcs
