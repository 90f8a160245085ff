#pragma once

// Constructive test data: data f and initial fields.

#include <array>
#include <cstdint>

#include "qflow/grid.hpp"

namespace qflow {

/// c (1 + a cos(2 pi m.x / L)).
ScalarField cosine_field(const TorusGrid& grid, double c, double a, const std::array<int, 4>& m);

/// Peaked positive datum centered at (L/2, ..., L/2):
/// c exp(a sum_i cos(2 pi (x_i - L/2) / L)) divided by its mean, so \int = c L^4.
ScalarField bump_field(const TorusGrid& grid, double c, double a);

/// Mean-zero trigonometric polynomial with modes 0 < |m| <= max_mode and
/// coefficients drawn from a seeded SplitMix64 stream, damped by (1+|m|^2)^-2
/// and scaled so that max |u| = amplitude. Bitwise reproducible.
ScalarField random_smooth_field(const TorusGrid& grid, double amplitude, std::uint64_t seed,
                                int max_mode = 2);

}  // namespace qflow
