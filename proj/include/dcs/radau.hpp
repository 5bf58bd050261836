#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dcs/errors.hpp"
#include "dcs/linalg.hpp"
#include "dcs/quadrature.hpp"
#include "dcs/state.hpp"

namespace dcs {

struct RadauOptions {
    double rtol = 1e-5;
    double atol = 1e-5;
    std::size_t max_steps = 100000;
    /// Newton stopping threshold in the scaled norm; 0 selects
    /// max(10 eps / rtol, min(0.03, sqrt(rtol))).
    double newton_tol = 0.0;
    int newton_max_iters = 7;
    /// Initial step; 0 selects 0.01 * |y| / |f| in the scaled norm.
    double h_init = 0.0;
    /// Keep the Jacobian and the factorisation across accepted steps while the
    /// Newton contraction stays below this rate and the step changes by at
    /// most 20%. 0 recomputes both every step.
    double jacobian_reuse_theta = 0.0;
    int max_newton_failures = 10;
};

struct RadauStats {
    std::size_t steps = 0;
    std::size_t rejected = 0;
    std::size_t rhs_evals = 0;
    std::size_t jacobians = 0;
    std::size_t factorizations = 0;
    std::size_t newton_failures = 0;
};

/// Adaptive 3-stage RadauIIA integrator with simplified Newton iterations and
/// an embedded third-order error estimate (the classical Radau5 estimator).
///
/// `System` must provide
///   std::size_t size() const;
///   std::size_t bandwidth() const;                       // Jacobian half bandwidth
///   void rhs(double t, std::span<const double> y, std::span<double> f) const;
///   void jacobian(double t, std::span<const double> y, BandMatrix& J) const;
///
/// Stage unknowns are ordered component-major (index = 3 * component + stage),
/// so the Newton matrix inherits a band structure from the Jacobian.
template <class System>
class RadauIntegrator {
public:
    RadauIntegrator(const System& sys, RadauOptions opt)
        : sys_(sys), opt_(opt), tab_(radau_iia_3()), n_(sys.size()), bw_(std::min(sys.bandwidth(), n_ ? n_ - 1 : 0))
    {
        detail::require(opt_.rtol > 0.0 && opt_.atol > 0.0, "RadauIntegrator: tolerances must be positive");
        detail::require(opt_.newton_max_iters >= 1 && opt_.max_steps >= 1,
                        "RadauIntegrator: iteration caps must be >= 1");
        const double r6 = std::sqrt(6.0);
        gamma0_ = (6.0 + std::cbrt(81.0) - std::cbrt(9.0)) / 30.0;
        d_ = {-(13.0 + 7.0 * r6) / 3.0, (-13.0 + 7.0 * r6) / 3.0, -1.0 / 3.0};
        kappa_ = opt_.newton_tol > 0.0
                     ? opt_.newton_tol
                     : std::max(10.0 * std::numeric_limits<double>::epsilon() / opt_.rtol,
                                std::min(0.03, std::sqrt(opt_.rtol)));
        const std::size_t sb = std::min(3 * bw_ + 2, 3 * n_ - 1);
        jac_ = BandMatrix(n_, bw_, bw_);
        stage_ = BandMatrix(3 * n_, sb, sb);
        err_ = BandMatrix(n_, bw_, bw_);
        z_.assign(3 * n_, 0.0);
        dz_.assign(3 * n_, 0.0);
        f_.assign(3, State(n_));
        f0_.assign(n_, 0.0);
        tmp_.assign(n_, 0.0);
        v_.assign(n_, 0.0);
        ynew_.assign(n_, 0.0);
    }

    const RadauStats& stats() const { return stats_; }

    /// Advances y from t0 to t1 in place.
    void integrate(std::span<double> y, double t0, double t1)
    {
        detail::require(y.size() == n_, "RadauIntegrator: state size mismatch");
        detail::require(t1 >= t0, "RadauIntegrator: backward integration is not supported");
        if (t1 == t0) return;
        const double span = t1 - t0;
        double h = std::min(opt_.h_init > 0.0 ? opt_.h_init : initial_step(y, t0), span);
        double t = t0;
        bool have_jac = false;
        bool jac_current = false;
        bool have_lu = false;
        double h_lu = 0.0;
        bool first = true;
        bool rejected = false;
        double faccon = 1.0;
        int newton_failures = 0;
        std::size_t steps = 0;

        while (t < t1) {
            if (++steps > opt_.max_steps)
                throw StepLimitExceeded("RadauIntegrator: step budget of " +
                                        std::to_string(opt_.max_steps) + " exhausted");
            bool last = false;
            const double snap = std::max(1e-12 * span, 1e3 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t1), span));
            if (t + h >= t1 || (t1 - t - h) <= snap) {
                h = t1 - t;
                last = true;
            }
            const double tiny = 1e3 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), span);
            if (!(h > tiny)) throw StepUnderflow("RadauIntegrator: step size underflow at t = " + std::to_string(t));

            if (!have_jac) {
                sys_.jacobian(t, y, jac_);
                ++stats_.jacobians;
                have_jac = true;
                jac_current = true;
                have_lu = false;
            }
            if (!have_lu || h != h_lu) {
                factor(h);
                h_lu = h;
                have_lu = true;
            }
            sys_.rhs(t, y, f0_);
            ++stats_.rhs_evals;

            double theta = 0.0;
            double eta = std::pow(std::max(faccon, std::numeric_limits<double>::epsilon()), 0.8);
            if (!newton(y, t, h, eta, theta)) {
                ++stats_.newton_failures;
                if (++newton_failures > opt_.max_newton_failures)
                    throw NewtonDivergence("RadauIntegrator: Newton iteration diverged repeatedly at t = " +
                                           std::to_string(t));
                h *= 0.5;
                if (!jac_current) have_jac = false;
                rejected = true;
                continue;
            }
            newton_failures = 0;
            faccon = eta;

            for (std::size_t i = 0; i < n_; ++i) ynew_[i] = y[i] + z_[3 * i + 2];
            double err = estimate_error(y, t, h);
            if (err >= 1.0 && (first || rejected)) err = refine_error(y, t, h);

            const double quot = std::clamp(std::pow(err, 0.25) / 0.9, 1.0 / 8.0, 5.0);
            double h_new = h / quot;
            if (err < 1.0) {
                first = false;
                ++stats_.steps;
                std::copy(ynew_.begin(), ynew_.end(), y.begin());
                t = last ? t1 : t + h;
                if (rejected) h_new = std::min(h_new, h);
                rejected = false;
                const double ratio = h_new / h;
                const bool reuse = opt_.jacobian_reuse_theta > 0.0 && theta <= opt_.jacobian_reuse_theta;
                if (reuse && ratio >= 1.0 && ratio <= 1.2) h_new = h;
                if (!reuse) have_jac = false;
                jac_current = false;
                h = h_new;
            } else {
                ++stats_.rejected;
                rejected = true;
                h = first ? 0.1 * h : h_new;
                if (!jac_current) have_jac = false;
            }
        }
    }

private:
    double initial_step(std::span<const double> y, double t)
    {
        sys_.rhs(t, y, f0_);
        ++stats_.rhs_evals;
        double d0 = 0.0, d1 = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double sc = opt_.atol + opt_.rtol * std::abs(y[i]);
            d0 += (y[i] / sc) * (y[i] / sc);
            d1 += (f0_[i] / sc) * (f0_[i] / sc);
        }
        d0 = std::sqrt(d0 / static_cast<double>(n_));
        d1 = std::sqrt(d1 / static_cast<double>(n_));
        if (d0 < 1e-5 || d1 < 1e-5) return 1e-6;
        return 0.01 * d0 / d1;
    }

    void factor(double h)
    {
        stage_.set_zero();
        const std::size_t sb = stage_.lower();
        for (std::size_t r = 0; r < n_; ++r) {
            const std::size_t c0 = r > bw_ ? r - bw_ : 0;
            const std::size_t c1 = std::min(n_ - 1, r + bw_);
            for (std::size_t c = c0; c <= c1; ++c) {
                const double jrc = jac_(r, c);
                for (std::size_t i = 0; i < 3; ++i)
                    for (std::size_t j = 0; j < 3; ++j) {
                        const std::size_t row = 3 * r + i;
                        const std::size_t col = 3 * c + j;
                        if (col + sb < row || col > row + sb) continue;
                        stage_(row, col) = (r == c && i == j ? 1.0 : 0.0) - h * tab_.A[i][j] * jrc;
                    }
            }
        }
        err_.set_zero();
        for (std::size_t r = 0; r < n_; ++r) {
            const std::size_t c0 = r > bw_ ? r - bw_ : 0;
            const std::size_t c1 = std::min(n_ - 1, r + bw_);
            for (std::size_t c = c0; c <= c1; ++c)
                err_(r, c) = (r == c ? 1.0 : 0.0) - h * gamma0_ * jac_(r, c);
        }
        if (!stage_.factor() || !err_.factor())
            throw NewtonDivergence("RadauIntegrator: singular iteration matrix");
        stats_.factorizations += 2;
    }

    double scaled_norm(std::span<const double> dz, std::span<const double> y) const
    {
        double sum = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double sc = opt_.atol + opt_.rtol * std::abs(y[i]);
            for (std::size_t k = 0; k < 3; ++k) {
                const double r = dz[3 * i + k] / sc;
                sum += r * r;
            }
        }
        return std::sqrt(sum / static_cast<double>(3 * n_));
    }

    bool newton(std::span<const double> y, double t, double h, double& eta, double& theta)
    {
        std::fill(z_.begin(), z_.end(), 0.0);
        double dn_old = 0.0;
        theta = 0.0;
        for (int it = 1; it <= opt_.newton_max_iters; ++it) {
            for (std::size_t k = 0; k < 3; ++k) {
                for (std::size_t i = 0; i < n_; ++i) tmp_[i] = y[i] + z_[3 * i + k];
                sys_.rhs(t + tab_.c[k] * h, tmp_, f_[k]);
            }
            stats_.rhs_evals += 3;
            for (std::size_t i = 0; i < n_; ++i)
                for (std::size_t k = 0; k < 3; ++k)
                    dz_[3 * i + k] = -z_[3 * i + k] +
                                     h * (tab_.A[k][0] * f_[0][i] + tab_.A[k][1] * f_[1][i] +
                                          tab_.A[k][2] * f_[2][i]);
            stage_.solve(dz_);
            const double dn = scaled_norm(dz_, y);
            if (!std::isfinite(dn)) return false;
            if (it > 1) {
                theta = dn / dn_old;
                if (theta >= 0.99) return false;
                eta = theta / (1.0 - theta);
                const double predicted =
                    std::pow(theta, opt_.newton_max_iters - it) / (1.0 - theta) * dn;
                if (predicted > kappa_ * 1e2 && it < opt_.newton_max_iters) return false;
            }
            for (std::size_t i = 0; i < z_.size(); ++i) z_[i] += dz_[i];
            if (eta * dn <= kappa_) return true;
            if (dn == 0.0) return true;
            dn_old = dn;
        }
        return false;
    }

    double stage_combination(std::size_t i) const
    {
        return gamma0_ * (d_[0] * z_[3 * i] + d_[1] * z_[3 * i + 1] + d_[2] * z_[3 * i + 2]);
    }

    double estimate_error(std::span<const double> y, double, double h)
    {
        for (std::size_t i = 0; i < n_; ++i) v_[i] = gamma0_ * h * f0_[i] + stage_combination(i);
        err_.solve(v_);
        return weighted_rms(v_, y, ynew_, opt_.rtol, opt_.atol);
    }

    double refine_error(std::span<const double> y, double t, double h)
    {
        for (std::size_t i = 0; i < n_; ++i) tmp_[i] = y[i] + v_[i];
        sys_.rhs(t, tmp_, f_[0]);
        ++stats_.rhs_evals;
        for (std::size_t i = 0; i < n_; ++i) v_[i] = gamma0_ * h * f_[0][i] + stage_combination(i);
        err_.solve(v_);
        return weighted_rms(v_, y, ynew_, opt_.rtol, opt_.atol);
    }

    const System& sys_;
    RadauOptions opt_;
    ButcherTableau tab_;
    std::size_t n_;
    std::size_t bw_;
    double gamma0_ = 0.0;
    std::array<double, 3> d_{};
    double kappa_ = 0.0;
    BandMatrix jac_;
    BandMatrix stage_;
    BandMatrix err_;
    std::vector<double> z_, dz_, f0_, tmp_, v_, ynew_;
    std::vector<State> f_;
    RadauStats stats_;
};

} // namespace dcs
