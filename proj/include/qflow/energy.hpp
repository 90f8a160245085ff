#pragma once

// The Q-curvature functional
//
//   E(u) = 1/2 \int P u . u + \int f u - (k/4) log \int e^{4u},   k = \int f,
//
// its L^2 gradient, the Adams-type deficit, conformal volume and the
// sublevel/entropy diagnostics monitored along the flow.

#include <memory>

#include "qflow/grid.hpp"

namespace qflow {

/// Datum f and its total curvature k = \int f.
struct ProblemData {
    ScalarField f;
    double k = 0.0;

    const TorusGrid& grid() const noexcept { return f.grid(); }
};

ProblemData make_problem(ScalarField f);
double total_curvature(const ScalarField& f);

struct EnergyReport {
    double total = 0.0;
    double quadratic = 0.0;         ///< 1/2 \int P u . u
    double linear = 0.0;            ///< \int f u
    double log_term = 0.0;          ///< (k/4) log \int e^{4u}
    double conformal_volume = 0.0;  ///< \int e^{4u}
};

/// Throws NumericalError("overflow") when \int e^{4u} is not representable.
EnergyReport energy(const ScalarField& u, const ProblemData& p);

/// g(u) = P u + f - k e^{4u} / \int e^{4u}; dE(u)[v] = \int g(u) v.
ScalarField energy_gradient(const ScalarField& u, const ProblemData& p);

/// log \int e^{4(u - mean u)} - (1/(4 pi^2)) \int P u . u.
double adams_deficit(const ScalarField& u);

/// \int e^{4u}; throws NumericalError("overflow") if it is not representable.
double conformal_volume(const ScalarField& u);
/// log \int e^{4u}, evaluated with a max shift so it stays finite for large u.
double log_conformal_volume(const ScalarField& u);

/// u - (1/4) log \int e^{4u}, so the result has unit conformal volume.
ScalarField normalize(ScalarField u);

struct SublevelDiagnostics {
    double alpha0 = 0.0;           ///< (1/4) log(reference_volume / (2 L^4))
    double sublevel_volume = 0.0;  ///< |{u >= alpha0}|
    double Y = 0.0;                ///< \int u e^{4u}
};

SublevelDiagnostics sublevel_diagnostics(const ScalarField& u, double reference_volume);

/// One monitored snapshot of a flow.
struct DiagnosticsRow {
    double t = 0.0;
    double energy = 0.0;
    double conformal_volume = 0.0;
    double raw_volume_drift = 0.0;  ///< accumulated pre-renormalization volume change
    double sublevel_volume = 0.0;
    double Y = 0.0;
    double max_u = 0.0;
    double min_u = 0.0;
    double dt = 0.0;
    double residual_norm = 0.0;     ///< max |du/dt|
};

namespace detail {

/// \int P u . u from coefficients (Parseval), free of the roundoff that
/// applying |k|^4 to rounded grid values would amplify.
double paneitz_quadratic_form(const SpectralField& u_hat);

/// Energy with the quadratic term taken from an exact spectral twin of u.
EnergyReport energy(const SpectralField& u_hat, const ScalarField& u, const ProblemData& p);

/// e^{4u} / \int e^{4u}, evaluated with the max shift.
ScalarField normalized_density(const ScalarField& u);

}  // namespace detail

}  // namespace qflow
