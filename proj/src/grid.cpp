#include "qflow/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qflow/error.hpp"

namespace qflow {

TorusGrid::TorusGrid(int n, double period) : n_(n), period_(period) {
    if (n % 2 != 0) throw InvalidArgument("grid: n must be even, got " + std::to_string(n));
    if (n < 8 || n > 1024)
        throw InvalidArgument("grid: n must lie in [8, 1024], got " + std::to_string(n));
    if (!(period > 0.0) || !std::isfinite(period))
        throw InvalidArgument("grid: period must be positive and finite");
}

TorusGrid make_grid(int n, double period) { return TorusGrid(n, period); }

std::array<int, 4> TorusGrid::multi_index(std::size_t flat) const noexcept {
    const auto m = static_cast<std::size_t>(n_);
    std::array<int, 4> idx{};
    for (int axis = 3; axis >= 0; --axis) {
        idx[axis] = static_cast<int>(flat % m);
        flat /= m;
    }
    return idx;
}

Point TorusGrid::coordinates(std::size_t flat) const noexcept {
    const auto idx = multi_index(flat);
    const double h = spacing();
    return {idx[0] * h, idx[1] * h, idx[2] * h, idx[3] * h};
}

double TorusGrid::wrap(double d) const noexcept {
    d = std::fmod(d, period_);
    if (d < -0.5 * period_) d += period_;
    if (d >= 0.5 * period_) d -= period_;
    return d;
}

double TorusGrid::distance(const Point& a, const Point& b) const noexcept {
    double s = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double d = wrap(a[i] - b[i]);
        s += d * d;
    }
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------

ScalarField::ScalarField(const TorusGrid& grid, double value)
    : grid_(grid), values_(grid.total_points(), value) {}

ScalarField::ScalarField(const TorusGrid& grid, AlignedVector<double> values)
    : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.total_points())
        throw InvalidArgument("field: value count " + std::to_string(values_.size()) +
                              " does not match grid size " +
                              std::to_string(grid_.total_points()));
    if (!all_finite()) throw InvalidArgument("field: non-finite value");
}

ScalarField ScalarField::from_function(const TorusGrid& grid,
                                       const std::function<double(const Point&)>& fn) {
    ScalarField out(grid);
    for (std::size_t i = 0; i < out.size(); ++i) out.values_[i] = fn(grid.coordinates(i));
    if (!out.all_finite()) throw InvalidArgument("field: generator produced a non-finite value");
    return out;
}

double ScalarField::max() const { return *std::max_element(values_.begin(), values_.end()); }
double ScalarField::min() const { return *std::min_element(values_.begin(), values_.end()); }

bool ScalarField::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

static void require_same_grid(const TorusGrid& a, const TorusGrid& b) {
    if (!(a == b)) throw InvalidArgument("field arithmetic across different grids");
}

ScalarField& ScalarField::operator+=(const ScalarField& other) {
    require_same_grid(grid_, other.grid_);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

ScalarField& ScalarField::operator-=(const ScalarField& other) {
    require_same_grid(grid_, other.grid_);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

ScalarField& ScalarField::operator+=(double shift) {
    for (auto& v : values_) v += shift;
    return *this;
}

ScalarField& ScalarField::operator*=(double scale) {
    for (auto& v : values_) v *= scale;
    return *this;
}

ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
ScalarField operator*(double s, ScalarField a) { return a *= s; }

double max_abs_difference(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid(), b.grid());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// ---------------------------------------------------------------------------

SpectralField::SpectralField(const TorusGrid& grid)
    : grid_(grid), coeffs_(grid.spectral_size(), std::complex<double>(0.0, 0.0)) {}

std::complex<double> SpectralField::coefficient(int m1, int m2, int m3, int m4) const {
    const int n = grid_.n();
    auto in_range = [n](int m) { return m >= -n / 2 && m < n / 2; };
    if (!in_range(m1) || !in_range(m2) || !in_range(m3) || !in_range(m4))
        throw InvalidArgument("spectral: wavevector outside the retained band");
    auto idx = [n](int m) { return (m + n) % n; };
    if (m4 >= 0) return coeffs_[half_index(idx(m1), idx(m2), idx(m3), m4)];
    if (m4 == -n / 2) return coeffs_[half_index(idx(m1), idx(m2), idx(m3), n / 2)];
    return std::conj(coeffs_[half_index(idx(-m1), idx(-m2), idx(-m3), -m4)]);
}

double SpectralField::hermitian_defect() const {
    const int n = grid_.n();
    double scale2 = 0.0;
    for (const auto& c : coeffs_) scale2 = std::max(scale2, std::norm(c));
    if (scale2 == 0.0) return 0.0;
    double worst2 = 0.0;
    for (int j4 : {0, n / 2}) {
        for (int i1 = 0; i1 < n; ++i1)
            for (int i2 = 0; i2 < n; ++i2)
                for (int i3 = 0; i3 < n; ++i3) {
                    const auto a = coeffs_[half_index(i1, i2, i3, j4)];
                    const auto b = coeffs_[half_index((n - i1) % n, (n - i2) % n, (n - i3) % n, j4)];
                    worst2 = std::max(worst2, std::norm(a - std::conj(b)));
                }
    }
    return std::sqrt(worst2 / scale2);
}

SpectralField& SpectralField::operator+=(const SpectralField& other) {
    require_same_grid(grid_, other.grid_);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += other.coeffs_[i];
    return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& other) {
    require_same_grid(grid_, other.grid_);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= other.coeffs_[i];
    return *this;
}

SpectralField& SpectralField::operator*=(double scale) {
    for (auto& c : coeffs_) c *= scale;
    return *this;
}

SpectralField& SpectralField::add_scaled(double a, const SpectralField& x) {
    require_same_grid(grid_, x.grid_);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += a * x.coeffs_[i];
    return *this;
}

// ---------------------------------------------------------------------------

double pairwise_sum(std::span<const double> values) {
    return pairwise_reduce(values.size(), [&](std::size_t i) { return values[i]; });
}

double integrate(const ScalarField& field) {
    return field.grid().cell_volume() * pairwise_sum(field.values());
}

double inner_product(const SpectralField& a, const SpectralField& b) {
    require_same_grid(a.grid(), b.grid());
    const TorusGrid& g = a.grid();
    const std::size_t h = static_cast<std::size_t>(g.half_modes());
    const std::size_t last = h - 1;  // the Nyquist column n/2
    const auto* pa = a.data().data();
    const auto* pb = b.data().data();
    // One term per stored row of the last axis, then the pairwise tree over rows.
    const double s = pairwise_reduce(a.size() / h, [&](std::size_t row) {
        const std::size_t o = row * h;
        auto dot = [&](std::size_t i) {
            return pa[i].real() * pb[i].real() + pa[i].imag() * pb[i].imag();
        };
        double inner = 0.0;
        for (std::size_t j = 1; j < last; ++j) inner += dot(o + j);
        return dot(o) + dot(o + last) + 2.0 * inner;
    });
    return g.volume() * s;
}

double ball_integral(const ScalarField& field, const Point& center, double radius) {
    const TorusGrid& g = field.grid();
    if (!(radius > 0.0) || radius > 0.5 * g.period())
        throw InvalidArgument("ball_integral: radius must lie in (0, L/2]");
    const double h = g.spacing();
    const double r2 = radius * radius * (1.0 + 1e-12);

    // Per axis: indices whose minimum-image offset is within the radius.
    std::array<std::vector<std::pair<int, double>>, 4> axis;
    for (int a = 0; a < 4; ++a) {
        for (int i = 0; i < g.n(); ++i) {
            const double d = g.wrap(i * h - center[a]);
            if (d * d <= r2) axis[a].emplace_back(i, d * d);
        }
    }
    // Neumaier-compensated sum in a fixed traversal order.
    double sum = 0.0, comp = 0.0;
    auto add = [&](double v) {
        const double t = sum + v;
        comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    };
    for (const auto& [i1, d1] : axis[0])
        for (const auto& [i2, d2] : axis[1]) {
            const double s12 = d1 + d2;
            if (s12 > r2) continue;
            for (const auto& [i3, d3] : axis[2]) {
                const double s123 = s12 + d3;
                if (s123 > r2) continue;
                for (const auto& [i4, d4] : axis[3])
                    if (s123 + d4 <= r2) add(field[g.index(i1, i2, i3, i4)]);
            }
        }
    return g.cell_volume() * (sum + comp);
}

}  // namespace qflow
