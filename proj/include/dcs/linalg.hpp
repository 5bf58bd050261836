#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dcs/errors.hpp"

namespace dcs {

/// Square band matrix with kl sub- and ku super-diagonals, factorised in place
/// by Gaussian elimination with partial pivoting. Rows are stored with room
/// for the kl extra super-diagonals created by row interchanges, so row i
/// holds columns [i - kl, i + kl + ku].
class BandMatrix {
public:
    BandMatrix() = default;

    BandMatrix(std::size_t n, std::size_t kl, std::size_t ku)
        : n_(n), kl_(kl), ku_(ku), width_(2 * kl + ku + 1), data_(n * width_, 0.0), pivots_(n, 0)
    {
    }

    /// Dense n x n matrix expressed as a band matrix.
    static BandMatrix dense(std::size_t n)
    {
        const std::size_t b = n > 0 ? n - 1 : 0;
        return BandMatrix(n, b, b);
    }

    std::size_t size() const { return n_; }
    std::size_t lower() const { return kl_; }
    std::size_t upper() const { return ku_; }

    bool in_band(std::size_t i, std::size_t j) const
    {
        return j + kl_ >= i && j <= i + ku_;
    }

    double& operator()(std::size_t i, std::size_t j)
    {
        return data_[i * width_ + (j + kl_ - i)];
    }

    double operator()(std::size_t i, std::size_t j) const
    {
        return data_[i * width_ + (j + kl_ - i)];
    }

    void set_zero()
    {
        std::fill(data_.begin(), data_.end(), 0.0);
        factored_ = false;
    }

    /// y = A x (only valid before factorisation).
    void multiply(std::span<const double> x, std::span<double> y) const
    {
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t j0 = i > kl_ ? i - kl_ : 0;
            const std::size_t j1 = std::min(n_ - 1, i + ku_);
            double acc = 0.0;
            for (std::size_t j = j0; j <= j1; ++j) acc += (*this)(i, j) * x[j];
            y[i] = acc;
        }
    }

    /// LU factorisation in place. Returns false when a zero pivot is met.
    bool factor()
    {
        const std::size_t reach = kl_ + ku_;
        for (std::size_t k = 0; k < n_; ++k) {
            const std::size_t last = std::min(n_ - 1, k + kl_);
            std::size_t p = k;
            double best = std::abs((*this)(k, k));
            for (std::size_t i = k + 1; i <= last; ++i) {
                const double v = std::abs((*this)(i, k));
                if (v > best) {
                    best = v;
                    p = i;
                }
            }
            pivots_[k] = p;
            if (best == 0.0) return false;
            const std::size_t jend = std::min(n_ - 1, k + reach);
            if (p != k)
                for (std::size_t j = k; j <= jend; ++j) std::swap((*this)(k, j), (*this)(p, j));
            const double inv = 1.0 / (*this)(k, k);
            for (std::size_t i = k + 1; i <= last; ++i) {
                const double l = (*this)(i, k) * inv;
                (*this)(i, k) = l;
                if (l == 0.0) continue;
                for (std::size_t j = k + 1; j <= jend; ++j) (*this)(i, j) -= l * (*this)(k, j);
            }
        }
        factored_ = true;
        return true;
    }

    /// Solves A x = b in place using the stored factorisation.
    void solve(std::span<double> b) const
    {
        detail::require(factored_, "BandMatrix::solve before factor");
        detail::require(b.size() == n_, "BandMatrix::solve: size mismatch");
        for (std::size_t k = 0; k < n_; ++k) {
            const std::size_t p = pivots_[k];
            if (p != k) std::swap(b[k], b[p]);
            const std::size_t last = std::min(n_ - 1, k + kl_);
            const double bk = b[k];
            if (bk == 0.0) continue;
            for (std::size_t i = k + 1; i <= last; ++i) b[i] -= (*this)(i, k) * bk;
        }
        const std::size_t reach = kl_ + ku_;
        for (std::size_t ii = n_; ii-- > 0;) {
            const std::size_t jend = std::min(n_ - 1, ii + reach);
            double acc = b[ii];
            for (std::size_t j = ii + 1; j <= jend; ++j) acc -= (*this)(ii, j) * b[j];
            b[ii] = acc / (*this)(ii, ii);
        }
    }

    bool factored() const { return factored_; }

private:
    std::size_t n_ = 0;
    std::size_t kl_ = 0;
    std::size_t ku_ = 0;
    std::size_t width_ = 1;
    std::vector<double> data_;
    std::vector<std::size_t> pivots_;
    bool factored_ = false;
};

} // namespace dcs
