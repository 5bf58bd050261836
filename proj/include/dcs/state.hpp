#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dcs/errors.hpp"

namespace dcs {

/// Flattened semi-discrete solution at one time point. Point-major layout:
/// component c of grid point j lives at index j * species + c.
using State = std::vector<double>;

inline void axpy(double a, std::span<const double> x, std::span<double> y)
{
    detail::require(x.size() == y.size(), "axpy: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline State difference(std::span<const double> a, std::span<const double> b)
{
    detail::require(a.size() == b.size(), "difference: size mismatch");
    State d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return d;
}

inline double max_abs(std::span<const double> x)
{
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

/// Weighted RMS norm with weights atol + rtol * max(|y0|, |y1|); the usual
/// stiff-solver convention, applied uniformly to all components.
inline double weighted_rms(std::span<const double> err,
                           std::span<const double> y0,
                           std::span<const double> y1,
                           double rtol, double atol)
{
    if (err.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < err.size(); ++i) {
        const double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
        const double r = err[i] / sc;
        sum += r * r;
    }
    return std::sqrt(sum / static_cast<double>(err.size()));
}

/// Norm used for all DC-S error estimates and reported errors.
///
/// `rms` is the discrete L2 norm sqrt(mean(e^2)); `max` the infinity norm.
/// When `scale_species` is non-negative the result is divided by the max
/// norm of that species in a reference state (the BZ runs scale by the
/// max norm of a(t, x)).
struct ErrorNorm {
    enum class Kind { rms, max };

    Kind kind = Kind::rms;
    int scale_species = -1;

    /// Scaling factor taken from `reference` (point-major, `species` per point).
    double scale_of(std::span<const double> reference, std::size_t species) const
    {
        if (scale_species < 0) return 1.0;
        detail::require(static_cast<std::size_t>(scale_species) < species,
                        "ErrorNorm: scale species out of range");
        double m = 0.0;
        for (std::size_t i = static_cast<std::size_t>(scale_species); i < reference.size();
             i += species)
            m = std::max(m, std::abs(reference[i]));
        return m > 0.0 ? m : 1.0;
    }

    double operator()(std::span<const double> e, double scale = 1.0) const
    {
        if (e.empty()) return 0.0;
        double v = 0.0;
        if (kind == Kind::max) {
            v = max_abs(e);
        } else {
            double sum = 0.0;
            for (double x : e) sum += x * x;
            v = std::sqrt(sum / static_cast<double>(e.size()));
        }
        return v / scale;
    }

    double distance(std::span<const double> a, std::span<const double> b, double scale = 1.0) const
    {
        const State d = difference(a, b);
        return (*this)(d, scale);
    }
};

} // namespace dcs
