#pragma once

// Time integration of the Q-curvature flow
//
//   du/dt = -1/2 e^{-4u} (P u + f) + 1/2 k / \int e^{4u},
//
// the e^{4u}-weighted gradient flow of E. It conserves \int e^{4u} and
// dissipates E at the rate 2 \int e^{4u} |du/dt|^2.
//
// Time stepping: the linearly implicit step
//
//   e^{4u} (u+ - u) / dt = -1/2 (P u+ + f) + 1/2 k e^{4u} / \int e^{4u}
//
// (P implicit, the weight e^{-4u} and the volume lagged). For k >= 0 it
// decreases E for every dt, because log \int e^{4u} is convex, and it keeps
// \int e^{4u} (u+ - u) = 0 exactly, so the volume only drifts at O(dt^2) per
// step. The symmetric positive system is solved for the increment by
// conjugate gradients in coefficient space.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qflow/energy.hpp"

namespace qflow {

struct FlowOptions {
    double dt_init = 1e-5;
    double dt_min = 1e-12;
    double dt_max = 1e-2;
    double t_end = 1.0;
    /// Accepted steps satisfy E+ <= E + energy_tolerance * (1 + |E|).
    double energy_tolerance = 1e-12;
    bool volume_renormalize = true;
    double inner_tol = 1e-10;
    int inner_max_iter = 2000;
    int diagnostics_stride = 1;

    /// Step-size control on rho = (dt/4) <P du, du> / \int e^{4u} du^2, the
    /// part of the energy decrease not accounted for by the continuous
    /// dissipation. Steps with rho > defect_reject * defect_target are rejected.
    double defect_target = 0.02;
    double defect_reject = 4.0;
    /// Once a step dissipates less than 1/defect_relax_window of the energy
    /// already dissipated, the target is scaled up by that ratio: such a step's
    /// share of the ledger stays below defect_target / defect_relax_window of
    /// the total. 0 disables the relaxation.
    double defect_relax_window = 100.0;

    /// Steady state: max |du/dt| <= steady_tol on steady_window consecutive
    /// accepted steps (or on a step that leaves u unchanged).
    double steady_tol = 1e-9;
    int steady_window = 10;

    /// Divergence: E < E(u0) - divergence_energy_drop with max u > divergence_max_u.
    double divergence_energy_drop = 1e4;
    double divergence_max_u = 50.0;

    /// Throws InvalidArgument when the options are inconsistent.
    void validate() const;
};

struct FlowState {
    ScalarField u;
    SpectralField u_hat;  ///< coefficients of u, the master copy
    double t = 0.0;
    double dt = 0.0;      ///< step to try next
    ProblemData p;
    std::int64_t step_count = 0;

    double initial_volume = 0.0;   ///< \int e^{4 u0}
    double initial_energy = 0.0;   ///< E(u0)
    double raw_volume_drift = 0.0; ///< sum over steps of the pre-renormalization volume change
    double energy = 0.0;
    double residual_norm = 0.0;    ///< max |du/dt| at u
    std::int64_t rejected_steps = 0;

    double last_dt = 0.0;          ///< dt of the most recent accepted step
    double last_defect = 0.0;      ///< rho of the most recent accepted step
    bool last_step_stationary = false;  ///< the last accepted step left u bitwise unchanged
    int last_inner_iterations = 0;      ///< Krylov iterations of the most recent accepted step
    /// Increment of the most recent accepted step; seeds the next inner solve.
    std::optional<SpectralField> last_increment;
};

/// Initial state at t = 0 with dt = opts.dt_init. Does not renormalize u0.
FlowState initial_state(const ScalarField& u0, const ProblemData& p, const FlowOptions& opts);

enum class FlowOutcome { reached_t_end, converged_to_steady, energy_diverging, step_underflow };

std::string to_string(FlowOutcome o);

struct Trajectory {
    std::vector<DiagnosticsRow> rows;
    FlowState final;
    FlowOutcome outcome = FlowOutcome::reached_t_end;
    /// Sum over accepted steps of 2 \int e^{4 u_mid} (du/dt)^2 dt.
    double dissipation_total = 0.0;
    /// Largest E+ - E over accepted steps, relative to 1 + |E|.
    double max_energy_increase = 0.0;
    std::int64_t rejected_steps = 0;
};

/// -1/2 e^{-4u} (P u + f) + 1/2 k / \int e^{4u}.
ScalarField flow_rhs(const ScalarField& u, const ProblemData& p);

/// Advances by one accepted step (never past opts.t_end), halving dt on
/// rejection. Throws NumericalError("step_underflow") when dt would drop below
/// dt_min.
FlowState step(const FlowState& state, const FlowOptions& opts);

/// Integrates until t_end, a steady state, divergence, or step underflow.
Trajectory run(const ScalarField& u0, const ProblemData& p, const FlowOptions& opts);

struct DissipationCheck {
    double delta_energy = 0.0;          ///< E(after) - E(before)
    double dissipation_estimate = 0.0;  ///< -2 \int e^{4 u_mid} ((u_a - u_b)/dt)^2 dt
};

DissipationCheck dissipation_check(const FlowState& before, const FlowState& after);

/// One unconditional step of the scheme with a fixed dt and no step control
/// or renormalization.
SpectralField semi_implicit_update(const SpectralField& u_hat, const ProblemData& p, double dt,
                                   double inner_tol = 1e-13);

}  // namespace qflow
