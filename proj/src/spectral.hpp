#pragma once

// Small spectral-space helpers shared by the solvers.

#include <cmath>
#include <vector>

#include "qflow/grid.hpp"

namespace qflow::detail {

/// inverse_transform without the Hermitian-symmetry and finiteness checks,
/// for spectra that are real by construction (solver internals).
ScalarField inverse_transform_trusted(const SpectralField& spectrum);

/// |xi|^4 for every stored mode, in half-spectrum order.
inline std::vector<double> paneitz_symbol(const TorusGrid& g) {
    std::vector<double> s(g.spectral_size());
    for_each_mode(g, [&](std::size_t i, int m1, int m2, int m3, int m4, double) {
        const double k2 = wave_norm2(g, m1, m2, m3, m4);
        s[i] = k2 * k2;
    });
    return s;
}

inline SpectralField multiply(const SpectralField& x, const std::vector<double>& symbol) {
    SpectralField out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= symbol[i];
    return out;
}

/// sum_m symbol(m) |x(m)|^2 L^4 with the Parseval multiplicities.
inline double weighted_norm2(const SpectralField& x, const std::vector<double>& symbol) {
    const TorusGrid& g = x.grid();
    std::vector<double> terms(x.size());
    for_each_mode(g, [&](std::size_t i, int, int, int, int, double w) {
        terms[i] = w * symbol[i] * std::norm(x[i]);
    });
    return g.volume() * pairwise_sum(terms);
}

/// Adds a constant c to the function represented by x.
inline void add_constant(SpectralField& x, double c) { x[0] += c; }

}  // namespace qflow::detail
