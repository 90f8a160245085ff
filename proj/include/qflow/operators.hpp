#pragma once

// The Paneitz operator of the flat torus (the bilaplacian), its inverse on
// mean-zero data, and the mean-free Green function with a fit of its
// logarithmic singularity.

#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "qflow/grid.hpp"

namespace qflow {

/// Coefficient of log|x - y| in the Green function: -1/(8 pi^2).
inline constexpr double green_log_coefficient = -1.0 / (8.0 * std::numbers::pi * std::numbers::pi);

/// Multiplies every coefficient by |k|^4.
SpectralField apply_paneitz(const SpectralField& u);
ScalarField apply_paneitz(const ScalarField& u);

/// Solves P u = rhs - mean(rhs) with mean(u) = mean_value.
/// Throws InvalidArgument if |integral(rhs)| > 1e-8 (1 + max|rhs|) L^4.
ScalarField solve_paneitz(const ScalarField& rhs, double mean_value);

struct GreenFieldSample {
    Point source;
    ScalarField field;  ///< band-limited G(., source)
    double mean = 0.0;  ///< integral of field / L^4; zero by construction
};

/// Band-limited solution of P G = delta_source - 1/L^4 with zero mean. The
/// delta keeps every retained mode with unit weight; on Nyquist planes only
/// the cosine part of the phase survives so the field stays real.
GreenFieldSample green_field(const TorusGrid& grid, const Point& source);

/// A value at distance r from a source, standing in for `weight` grid points.
struct RadialSample {
    double r = 0.0;
    double value = 0.0;
    double weight = 1.0;
};

/// Values of green_field(grid, origin) at every grid point with
/// r_min <= |x| <= r_max (r_max <= L/4), computed from the reflection-symmetric
/// cosine series on one orthant. Memory scales with (n/2)^4 instead of n^4,
/// which is what makes n = 128 affordable.
std::vector<RadialSample> green_annulus_samples(const TorusGrid& grid, double r_min, double r_max);

struct LogFit {
    double slope = 0.0;             ///< a in  G ~ a log r + b
    double regular_estimate = 0.0;  ///< b
    double r_min = 0.0;
    double r_max = 0.0;
    double residual = 0.0;          ///< weighted RMS misfit
    double points = 0.0;            ///< grid points in the annulus
};

/// Weighted least squares of value against a*log(r) + b for samples with
/// r_min <= r <= r_max. Throws InvalidArgument with fewer than 32 points.
LogFit fit_log_profile(std::span<const RadialSample> samples, double r_min, double r_max);

/// Requires 4*spacing <= r_min < r_max <= L/4.
LogFit green_log_fit(const GreenFieldSample& sample, double r_min, double r_max);
/// Default window (6*spacing, L/8).
LogFit green_log_fit(const GreenFieldSample& sample);

}  // namespace qflow
