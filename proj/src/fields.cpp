#include "qflow/fields.hpp"

#include <cmath>
#include <vector>

#include "qflow/error.hpp"

namespace qflow {

namespace {

struct SplitMix64 {
    std::uint64_t state;
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    /// Uniform in [-1, 1).
    double symmetric() { return 2.0 * static_cast<double>(next() >> 11) * 0x1.0p-53 - 1.0; }
};

}  // namespace

ScalarField cosine_field(const TorusGrid& grid, double c, double a, const std::array<int, 4>& m) {
    const double w = 2.0 * std::numbers::pi / grid.period();
    return ScalarField::from_function(grid, [&](const Point& x) {
        double phase = 0.0;
        for (int i = 0; i < 4; ++i) phase += m[i] * x[i];
        return c * (1.0 + a * std::cos(w * phase));
    });
}

ScalarField bump_field(const TorusGrid& grid, double c, double a) {
    const double w = 2.0 * std::numbers::pi / grid.period();
    const double mid = 0.5 * grid.period();
    ScalarField f = ScalarField::from_function(grid, [&](const Point& x) {
        double s = 0.0;
        for (double xi : x) s += std::cos(w * (xi - mid));
        return std::exp(a * s);
    });
    const double mean = integrate(f) / grid.volume();
    f *= c / mean;
    return f;
}

ScalarField random_smooth_field(const TorusGrid& grid, double amplitude, std::uint64_t seed,
                                int max_mode) {
    if (max_mode < 1 || 2 * max_mode >= grid.n())
        throw InvalidArgument("random_smooth_field: need 1 <= max_mode < n/2");
    SplitMix64 rng{seed};
    struct Mode {
        std::array<int, 4> m;
        double a, b;
    };
    std::vector<Mode> modes;
    const int M = max_mode;
    for (int m1 = -M; m1 <= M; ++m1)
        for (int m2 = -M; m2 <= M; ++m2)
            for (int m3 = -M; m3 <= M; ++m3)
                for (int m4 = -M; m4 <= M; ++m4) {
                    const int q = m1 * m1 + m2 * m2 + m3 * m3 + m4 * m4;
                    if (q == 0 || q > M * M) continue;
                    const double damp = 1.0 / ((1.0 + q) * (1.0 + q));
                    const double a = damp * rng.symmetric();
                    const double b = damp * rng.symmetric();
                    modes.push_back({{m1, m2, m3, m4}, a, b});
                }
    // a cos(k.x) + b sin(k.x) = c e^{ik.x} + conj(c) e^{-ik.x} with c = (a - ib)/2.
    SpectralField spec(grid);
    const int n = grid.n();
    auto at = [&](const std::array<int, 4>& m) {
        return spec.half_index((m[0] + n) % n, (m[1] + n) % n, (m[2] + n) % n, m[3]);
    };
    for (const auto& md : modes) {
        const std::complex<double> c(0.5 * md.a, -0.5 * md.b);
        const std::array<int, 4> neg{-md.m[0], -md.m[1], -md.m[2], -md.m[3]};
        if (md.m[3] >= 0) spec[at(md.m)] += c;
        if (md.m[3] <= 0) spec[at(neg)] += std::conj(c);
    }
    ScalarField u = inverse_transform(spec);
    const double peak = std::max(std::abs(u.max()), std::abs(u.min()));
    if (peak > 0.0) u *= amplitude / peak;
    return u;
}

}  // namespace qflow
