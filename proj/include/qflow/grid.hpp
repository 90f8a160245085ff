#pragma once

// Uniform periodic collocation grid on the flat 4-torus (R/LZ)^4, real fields
// on it, their Fourier coefficients, and the quadratures everything else is
// built on.
//
// Storage is row-major with axis 4 fastest: flat = ((i1*n + i2)*n + i3)*n + i4.
// Spectral storage is the half spectrum of a real transform: axes 1..3 keep all
// n modes, axis 4 keeps m4 = 0..n/2.

#include <array>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <new>
#include <numbers>
#include <span>
#include <vector>

namespace qflow {

using Point = std::array<double, 4>;

namespace detail {
void* aligned_alloc_bytes(std::size_t bytes);
void aligned_free(void* p) noexcept;
}  // namespace detail

/// SIMD-aligned allocator so every buffer can be handed to the FFT backend.
template <class T>
struct AlignedAllocator {
    using value_type = T;

    AlignedAllocator() noexcept = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t count) {
        if (count > std::numeric_limits<std::size_t>::max() / sizeof(T)) throw std::bad_alloc();
        void* p = detail::aligned_alloc_bytes(count * sizeof(T));
        if (p == nullptr) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, std::size_t) noexcept { detail::aligned_free(p); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

class TorusGrid {
public:
    /// Throws InvalidArgument unless n is even, 8 <= n <= 1024 and period > 0.
    TorusGrid(int n, double period);

    int n() const noexcept { return n_; }
    double period() const noexcept { return period_; }
    double spacing() const noexcept { return period_ / n_; }
    std::size_t total_points() const noexcept {
        const auto m = static_cast<std::size_t>(n_);
        return m * m * m * m;
    }
    double cell_volume() const noexcept {
        const double h = spacing();
        return h * h * h * h;
    }
    /// |M| = L^4.
    double volume() const noexcept { return period_ * period_ * period_ * period_; }

    /// Length of the stored last axis of a half spectrum: n/2 + 1.
    int half_modes() const noexcept { return n_ / 2 + 1; }
    std::size_t spectral_size() const noexcept {
        const auto m = static_cast<std::size_t>(n_);
        return m * m * m * static_cast<std::size_t>(half_modes());
    }

    /// Storage index in [0, n) -> signed mode in [-n/2, n/2).
    int signed_mode(int index) const noexcept { return index < n_ / 2 ? index : index - n_; }
    double wavenumber(int mode) const noexcept {
        return 2.0 * std::numbers::pi * mode / period_;
    }

    std::size_t index(int i1, int i2, int i3, int i4) const noexcept {
        const auto m = static_cast<std::size_t>(n_);
        return ((static_cast<std::size_t>(i1) * m + static_cast<std::size_t>(i2)) * m +
                static_cast<std::size_t>(i3)) * m + static_cast<std::size_t>(i4);
    }
    std::array<int, 4> multi_index(std::size_t flat) const noexcept;
    Point coordinates(std::size_t flat) const noexcept;

    /// Wraps a displacement into [-L/2, L/2).
    double wrap(double displacement) const noexcept;
    /// Minimum-image Euclidean distance.
    double distance(const Point& a, const Point& b) const noexcept;

    bool operator==(const TorusGrid&) const = default;

private:
    int n_;
    double period_;
};

TorusGrid make_grid(int n, double period);

/// Real values on a grid. Values are expected to stay finite; constructors
/// that take external data check this.
class ScalarField {
public:
    explicit ScalarField(const TorusGrid& grid, double value = 0.0);
    ScalarField(const TorusGrid& grid, AlignedVector<double> values);

    static ScalarField from_function(const TorusGrid& grid,
                                     const std::function<double(const Point&)>& fn);

    const TorusGrid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    double max() const;
    double min() const;
    bool all_finite() const;

    ScalarField& operator+=(const ScalarField& other);
    ScalarField& operator-=(const ScalarField& other);
    ScalarField& operator+=(double shift);
    ScalarField& operator*=(double scale);

private:
    TorusGrid grid_;
    AlignedVector<double> values_;
};

ScalarField operator+(ScalarField a, const ScalarField& b);
ScalarField operator-(ScalarField a, const ScalarField& b);
ScalarField operator*(double s, ScalarField a);

/// Largest absolute pointwise difference.
double max_abs_difference(const ScalarField& a, const ScalarField& b);

/// Fourier coefficients c(m) = (1/N) sum_j u_j exp(-i k(m).x_j), so c(0) is the
/// mean and u(x) = sum_m c(m) exp(i k(m).x).
class SpectralField {
public:
    explicit SpectralField(const TorusGrid& grid);

    const TorusGrid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return coeffs_.size(); }
    std::span<std::complex<double>> data() noexcept { return coeffs_; }
    std::span<const std::complex<double>> data() const noexcept { return coeffs_; }
    std::complex<double>& operator[](std::size_t i) noexcept { return coeffs_[i]; }
    const std::complex<double>& operator[](std::size_t i) const noexcept { return coeffs_[i]; }

    std::size_t half_index(int i1, int i2, int i3, int j4) const noexcept {
        const auto m = static_cast<std::size_t>(grid_.n());
        return ((static_cast<std::size_t>(i1) * m + static_cast<std::size_t>(i2)) * m +
                static_cast<std::size_t>(i3)) * static_cast<std::size_t>(grid_.half_modes()) +
               static_cast<std::size_t>(j4);
    }

    /// Coefficient for any signed wavevector m in [-n/2, n/2)^4; negative m4
    /// is read from the conjugate partner.
    std::complex<double> coefficient(int m1, int m2, int m3, int m4) const;

    /// Largest violation of c(-m) = conj(c(m)) on the self-conjugate planes
    /// m4 = 0 and m4 = n/2, divided by max |c| (0 for the zero field).
    double hermitian_defect() const;

    SpectralField& operator+=(const SpectralField& other);
    SpectralField& operator-=(const SpectralField& other);
    SpectralField& operator*=(double scale);
    /// this += a * x
    SpectralField& add_scaled(double a, const SpectralField& x);

private:
    TorusGrid grid_;
    AlignedVector<std::complex<double>> coeffs_;
};

SpectralField forward_transform(const ScalarField& field);
/// Throws InvalidArgument when hermitian_defect() exceeds 1e-12.
ScalarField inverse_transform(const SpectralField& spectrum);

/// Deterministic pairwise summation (fixed split points, 128-term leaves).
double pairwise_sum(std::span<const double> values);

namespace detail {
template <class Term>
double pairwise_reduce_range(std::size_t begin, std::size_t end, const Term& term) {
    constexpr std::size_t leaf = 128;
    if (end - begin <= leaf) {
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) s += term(i);
        return s;
    }
    const std::size_t half = begin + ((end - begin) / 2 / leaf) * leaf;
    const std::size_t mid = half == begin ? begin + leaf : half;
    return pairwise_reduce_range(begin, mid, term) + pairwise_reduce_range(mid, end, term);
}
}  // namespace detail

/// Sum of term(i) for i in [0, count) with the same pairwise tree as pairwise_sum.
template <class Term>
double pairwise_reduce(std::size_t count, const Term& term) {
    return count == 0 ? 0.0 : detail::pairwise_reduce_range(0, count, term);
}

/// Calls fn(flat_half_index, m1, m2, m3, m4, weight) for every stored mode.
/// weight is the multiplicity of the mode in the full spectrum (1 on the
/// self-conjugate planes, 2 elsewhere), which is what Parseval sums need.
template <class Fn>
void for_each_mode(const TorusGrid& grid, Fn&& fn) {
    const int n = grid.n();
    const int h = grid.half_modes();
    std::size_t flat = 0;
    for (int i1 = 0; i1 < n; ++i1) {
        const int m1 = grid.signed_mode(i1);
        for (int i2 = 0; i2 < n; ++i2) {
            const int m2 = grid.signed_mode(i2);
            for (int i3 = 0; i3 < n; ++i3) {
                const int m3 = grid.signed_mode(i3);
                for (int j4 = 0; j4 < h; ++j4, ++flat) {
                    const double weight = (j4 == 0 || j4 == n / 2) ? 1.0 : 2.0;
                    fn(flat, m1, m2, m3, j4, weight);
                }
            }
        }
    }
}

/// |k(m)|^2 for signed modes m.
inline double wave_norm2(const TorusGrid& grid, int m1, int m2, int m3, int m4) noexcept {
    const double k = 2.0 * std::numbers::pi / grid.period();
    return k * k * (double(m1) * m1 + double(m2) * m2 + double(m3) * m3 + double(m4) * m4);
}

/// Trapezoidal quadrature: cell_volume * pairwise sum of values.
double integrate(const ScalarField& field);

/// Integral of a*b over the torus, computed spectrally (Parseval).
double inner_product(const SpectralField& a, const SpectralField& b);

/// cell_volume * sum of values at grid points within minimum-image distance
/// `radius` of `center`. Requires 0 < radius <= L/2.
double ball_integral(const ScalarField& field, const Point& center, double radius);

}  // namespace qflow
