#pragma once

// Blow-up analysis: the standard bubble
//
//   xi(z) = log(2 lambda / (1 + lambda^2 |z - z0|^2)) - (1/4) log(k / 6),
//
// which solves Delta^2 xi = k e^{4 xi} on R^4 with \int e^{4 xi} = 16 pi^2 / k,
// synthetic bubbles on the torus, concentration detection, rescaling, profile
// fitting, mass quantization and the two-ball Harnack comparison.

#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "qflow/energy.hpp"

namespace qflow {

inline constexpr double sphere_quantum = 16.0 * std::numbers::pi * std::numbers::pi;

struct Bubble {
    Point z0{};
    double lambda = 1.0;
    double k = sphere_quantum;
};

/// Throws InvalidArgument unless lambda > 0 and k > 0.
void validate(const Bubble& b);

double bubble_eval(const Bubble& b, const Point& z);
/// xi at distance r from z0.
double bubble_profile(const Bubble& b, double r);

/// \int_{B_R(z0)} e^{4 xi} dz = (16 pi^2 / k) (1 - t)^2 (1 + 2t), t = 1 / (1 + lambda^2 R^2).
/// R = infinity gives 16 pi^2 / k.
double bubble_mass(const Bubble& b, double R = std::numeric_limits<double>::infinity());

/// Bubble sampled with minimum-image distance from `center` (b.z0 is not
/// used). For L/4 <= r <= 3L/8 the profile is blended with a quintic
/// smoothstep into the constant xi(3L/8), which it keeps beyond 3L/8.
/// Requires lambda * L >= 20.
ScalarField sample_bubble_on_torus(const Bubble& b, const TorusGrid& grid, const Point& center);

/// (1/4) log(sum_j e^{4 xi_j}) for bubbles placed at the given centers.
ScalarField sample_bubbles_on_torus(const std::vector<Bubble>& bubbles,
                                    const std::vector<Point>& centers, const TorusGrid& grid);

/// Mass of the exact bubble outside B_{L/4}, which the blending discards.
double synthetic_tail_mass(const Bubble& b, double period);

struct ConcentrationSite {
    Point center{};
    std::size_t center_index = 0;
    double radius = 0.0;          ///< r*, at least one grid spacing
    double mass = 0.0;            ///< \int_{B_{r*}} e^{4u}
    double plateau_radius = 0.0;  ///< b r*
    double plateau_mass = 0.0;    ///< \int_{B_{b r*}} e^{4u}
    double quantum_ratio = 0.0;   ///< plateau mass / \int e^{4u} * k / (16 pi^2)
    bool concentrated = false;    ///< r* <= L/8
    bool quantized = false;       ///< concentrated and within 0.15 of a positive integer
};

struct DetectionOptions {
    double rho = 0.0;                ///< threshold for quantization_report; 0 means pi^2 / k
    double mask_factor = 8.0;        ///< masked radius in units of r*
    double plateau_increment = 0.05; ///< relative mass increment that ends the plateau search
    double concentration_radius = 0.125;  ///< r* <= this * L counts as concentrated
    double quantization_band = 0.15;
    int max_sites = 32;
};

/// pi^2 / k.
double default_rho(double k);

/// Works with the normalized density e^{4u} / \int e^{4u}, so rho is a
/// fraction of the total conformal volume and 0 < rho < 1 is required.
/// Each round finds the smallest lattice radius r* (bisection over squared
/// radii, FFT ball sums for the maximum over centers, lowest flat index on
/// ties) whose best ball reaches rho, records the site, zeroes the density on
/// B_{mask_factor r*} and repeats until no ball of radius up to L does.
std::vector<ConcentrationSite> detect_concentration(const ScalarField& u, double k, double rho,
                                                    const DetectionOptions& opts = {});

/// Samples of u(center + r z) + log r on the tensor grid z_j = -half_width + j dz,
/// dz = 2 half_width / (points - 1), by periodic trigonometric interpolation.
struct RescaledSamples {
    Point center{};
    double r = 1.0;
    double half_width = 1.0;
    int points = 0;
    double dz = 0.0;
    std::vector<double> values;  ///< points^4, axis 4 fastest

    Point z(std::size_t flat) const;
};

/// Requires r * half_width <= L/4 and points >= 2.
RescaledSamples rescale(const ScalarField& u, const Point& center, double r, double half_width,
                        int points = 33);

struct BubbleFit {
    Point z0_fit{};
    double lambda_fit = 0.0;
    double l2_error = 0.0;   ///< RMS of (samples - xi) over |z| <= fit_radius
    double sup_error = 0.0;  ///< max |samples - xi| over |z| <= fit_radius
    double fit_radius = 0.0; ///< half_width / 2
    std::size_t samples = 0;
    int iterations = 0;
};

/// Levenberg-Marquardt over (z0, log lambda) on the samples with
/// |z| <= half_width / 2. Throws NumericalError("fit") if the iteration does
/// not converge or the fitted bubble is wider than the window
/// (lambda * half_width / 2 < 1).
BubbleFit bubble_fit(const RescaledSamples& samples, double k);

struct QuantizationReport {
    std::vector<ConcentrationSite> sites;
    double total_volume = 0.0;  ///< \int e^{4u}
    double site_fraction = 0.0; ///< sum of plateau masses / total volume
    double unmasked_fraction = 0.0;  ///< density outside every plateau ball / total volume
    double accounting_error = 0.0;   ///< |site + unmasked - 1|
    double quantum_sum = 0.0;        ///< sum of quantum ratios of concentrated sites
};

QuantizationReport quantization_report(const ScalarField& u, double k,
                                       const DetectionOptions& opts = {});

struct HarnackMeasurement {
    Point x{}, y{};
    double r = 0.0, R = 0.0;
    double separation = 0.0;      ///< distance(x, y) / R
    double mass_r = 0.0;          ///< \int_{B_r(x)} e^{4u}
    double mass_R = 0.0;          ///< \int_{B_R(y)} e^{4u}
    double h_mass_r = 0.0;        ///< \int_{B_r(x)} k e^{4u}
    double h_mass_2R = 0.0;       ///< \int_{B_2R(y)} k e^{4u}, whole torus when 2R > L/2
    bool hypothesis_ok = false;   ///< h_mass_2R <= pi^2
    double measured_exponent = 0.0;  ///< log(mass_R / mass_r) / log(R / r), 0 when R = r
    double bound_exponent = 0.0;     ///< -4 + h_mass_r / (2 pi^2)

    /// measured_exponent <= -bound_exponent + slack (log(mass_R/mass_r) <= slack when R = r).
    bool holds(double slack) const;
};

/// h = k e^{4u}. Requires 0 < r <= R <= L/2 and k > 0; throws
/// NumericalError("zero_mass") when B_r(x) carries no mass.
HarnackMeasurement harnack_measure(const ScalarField& u, const ProblemData& p, const Point& x,
                                   const Point& y, double r, double R);

}  // namespace qflow
