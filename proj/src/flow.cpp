#include "qflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "krylov.hpp"
#include "qflow/error.hpp"
#include "qflow/operators.hpp"
#include "spectral.hpp"

namespace qflow {

namespace {

struct Increment {
    SpectralField delta;
    double tau = 0.0;    // (dt/2) e^{-4M}
    double shift = 0.0;  // M = max u
    ScalarField weight;  // D = e^{4(u - M)}
    int iterations = 0;
};

// Solves (D + tau P) delta = -tau (P u + f - k D / \int D) for the increment of
// one step; the system is the step equation multiplied by e^{-4M}.
Increment solve_increment(const SpectralField& u_hat, const ScalarField& u, const ProblemData& p,
                          const std::vector<double>& symbol, double dt, double tol, int max_iter,
                          const SpectralField* guess = nullptr) {
    const double top = u.max();
    ScalarField d(u.grid());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::exp(4.0 * (u[i] - top));
    const double vol = integrate(d);
    const double tau = 0.5 * dt * std::exp(-4.0 * top);

    ScalarField g = inverse_transform(detail::multiply(u_hat, symbol));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += p.f[i] - p.k * d[i] / vol;
    SpectralField b = forward_transform(g);
    b *= -tau;

    // Mean of D for the constant-coefficient preconditioner.
    const double d_mean = vol / u.grid().volume();
    std::vector<double> inv(symbol.size());
    for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / (d_mean + tau * symbol[i]);
    auto apply = [&](const SpectralField& x) {
        ScalarField xr = detail::inverse_transform_trusted(x);
        for (std::size_t i = 0; i < xr.size(); ++i) xr[i] *= d[i];
        SpectralField out = forward_transform(xr);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += tau * symbol[i] * x[i];
        return out;
    };
    detail::KrylovResult kr = detail::pcg(b, apply, inv, tol, max_iter, guess);
    return Increment{std::move(kr.x), tau, top, std::move(d), kr.iterations};
}

double max_abs_rate(const ScalarField& u, const ScalarField& pu, const ProblemData& p,
                    double log_volume) {
    const double mean_term = 0.5 * p.k * std::exp(-log_volume);
    double mx = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double r = -0.5 * std::exp(-4.0 * u[i]) * (pu[i] + p.f[i]) + mean_term;
        mx = std::max(mx, std::abs(r));
    }
    return mx;
}

bool is_zero(const SpectralField& x) {
    for (const auto& c : x.data())
        if (c != 0.0) return false;
    return true;
}

}  // namespace

void FlowOptions::validate() const {
    auto fail = [](const std::string& m) { throw InvalidArgument("flow options: " + m); };
    if (!(dt_min > 0.0 && dt_min <= dt_init && dt_init <= dt_max))
        fail("need 0 < dt_min <= dt_init <= dt_max");
    if (!(t_end > 0.0)) fail("t_end must be positive");
    if (!(energy_tolerance >= 0.0)) fail("energy_tolerance must be nonnegative");
    if (!(inner_tol > 0.0 && inner_tol < 1.0)) fail("inner_tol must lie in (0, 1)");
    if (inner_max_iter < 1) fail("inner_max_iter must be positive");
    if (diagnostics_stride < 1) fail("diagnostics_stride must be positive");
    if (!(defect_target > 0.0) || !(defect_reject >= 1.0))
        fail("need defect_target > 0 and defect_reject >= 1");
    if (!(defect_relax_window >= 0.0)) fail("defect_relax_window must be nonnegative");
    if (!(steady_tol > 0.0) || steady_window < 1) fail("need steady_tol > 0 and steady_window >= 1");
    if (!(divergence_energy_drop > 0.0)) fail("divergence_energy_drop must be positive");
}

std::string to_string(FlowOutcome o) {
    switch (o) {
        case FlowOutcome::reached_t_end: return "reached_t_end";
        case FlowOutcome::converged_to_steady: return "converged_to_steady";
        case FlowOutcome::energy_diverging: return "energy_diverging";
        case FlowOutcome::step_underflow: return "step_underflow";
    }
    return "unknown";
}

ScalarField flow_rhs(const ScalarField& u, const ProblemData& p) {
    const double lv = log_conformal_volume(u);
    if (!std::isfinite(lv) || lv > 709.0)
        throw NumericalError("overflow", "flow_rhs: conformal volume overflows (max u = " +
                                             std::to_string(u.max()) + ")");
    const double mean_term = 0.5 * p.k * std::exp(-lv);
    ScalarField r = apply_paneitz(u);
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = -0.5 * std::exp(-4.0 * u[i]) * (r[i] + p.f[i]) + mean_term;
        if (!std::isfinite(r[i]))
            throw NumericalError("overflow", "flow_rhs: e^{-4u} overflows (min u = " +
                                                 std::to_string(u.min()) + ")");
    }
    return r;
}

FlowState initial_state(const ScalarField& u0, const ProblemData& p, const FlowOptions& opts) {
    opts.validate();
    if (!(u0.grid() == p.grid())) throw InvalidArgument("flow: grid of u0 and datum differ");
    if (!u0.all_finite()) throw InvalidArgument("flow: u0 is not finite");
    SpectralField u_hat = forward_transform(u0);
    const EnergyReport e = detail::energy(u_hat, u0, p);
    const ScalarField pu = inverse_transform(apply_paneitz(u_hat));
    FlowState s{u0, std::move(u_hat), 0.0, opts.dt_init, p, 0, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}};
    s.initial_volume = e.conformal_volume;
    s.initial_energy = e.total;
    s.energy = e.total;
    s.residual_norm = max_abs_rate(u0, pu, p, std::log(e.conformal_volume));
    return s;
}

FlowState step(const FlowState& state, const FlowOptions& opts) {
    const ProblemData& p = state.p;
    const std::vector<double> symbol = detail::paneitz_symbol(p.grid());
    const double remaining = opts.t_end - state.t;
    const double e_old = state.energy;
    const double allowed = opts.energy_tolerance * (1.0 + std::abs(e_old));
    const double v_old = std::exp(log_conformal_volume(state.u));

    double dt = state.dt;
    std::int64_t rejected = 0;
    for (;;) {
        if (dt < opts.dt_min * (1.0 - 1e-12)) {
            std::ostringstream msg;
            msg << "dt fell below dt_min = " << opts.dt_min << " at t = " << state.t;
            throw NumericalError("step_underflow", msg.str());
        }
        const bool clipped = dt >= remaining;
        const double h = clipped ? remaining : dt;

        // The previous increment, rescaled to this step, is a good first guess
        // once the flow settles into smooth decay.
        std::optional<SpectralField> guess;
        if (state.last_increment && state.last_dt > 0.0) {
            guess = *state.last_increment;
            *guess *= h / state.last_dt;
        }
        std::optional<Increment> inc;
        try {
            inc = solve_increment(state.u_hat, state.u, p, symbol, h, opts.inner_tol,
                                  opts.inner_max_iter, guess ? &*guess : nullptr);
        } catch (const NumericalError& e) {
            if (e.failure_class() != "linear_solve") throw;
        }

        if (inc) {
            FlowState next = state;
            next.rejected_steps = state.rejected_steps + rejected;
            double log_v;
            double rho = 0.0;
            double target = opts.defect_target;
            double raw_change = 0.0;
            if (is_zero(inc->delta)) {
                next.last_step_stationary = true;
                log_v = std::log(v_old);
            } else {
                next.last_step_stationary = false;
                next.u_hat += inc->delta;
                next.u = inverse_transform(next.u_hat);
                log_v = log_conformal_volume(next.u);
                raw_change = std::exp(log_v) - v_old;

                const double pdd = detail::weighted_norm2(inc->delta, symbol);
                const auto un = next.u.values();
                const auto uo = state.u.values();
                const auto dv = inc->weight.values();
                const double ddd = p.grid().cell_volume() *
                                   pairwise_reduce(un.size(), [&](std::size_t i) {
                                       const double di = un[i] - uo[i];
                                       return dv[i] * di * di;
                                   });
                rho = ddd > 0.0 ? inc->tau * pdd / (2.0 * ddd) : 0.0;

                // Step dissipation (2/h) \int e^{4u} du^2 against what is already spent.
                const double spent = state.initial_energy - e_old;
                if (opts.defect_relax_window > 0.0 && ddd > 0.0 && spent > 0.0) {
                    const double log_step = std::log(2.0 / h) + 4.0 * inc->shift + std::log(ddd);
                    const double log_ratio =
                        std::log(spent) - std::log(opts.defect_relax_window) - log_step;
                    if (log_ratio > 0.0) target *= std::exp(std::min(log_ratio, 30.0));
                }

                if (opts.volume_renormalize) {
                    const double c = 0.25 * (std::log(state.initial_volume) - log_v);
                    next.u += c;
                    detail::add_constant(next.u_hat, c);
                    log_v = log_conformal_volume(next.u);
                }
            }
            const bool finite = next.u.all_finite() && std::isfinite(log_v) && log_v < 709.0;
            if (finite) {
                const EnergyReport e = detail::energy(next.u_hat, next.u, p);
                const bool energy_ok = e.total - e_old <= allowed;
                const bool defect_ok = rho <= opts.defect_reject * target;
                if (energy_ok && defect_ok) {
                    const ScalarField pu = inverse_transform(detail::multiply(next.u_hat, symbol));
                    next.energy = e.total;
                    next.residual_norm = max_abs_rate(next.u, pu, p, log_v);
                    next.raw_volume_drift = state.raw_volume_drift + raw_change;
                    next.t = clipped ? opts.t_end : state.t + h;
                    next.step_count = state.step_count + 1;
                    next.last_dt = h;
                    next.last_defect = rho;
                    next.last_inner_iterations = inc->iterations;
                    next.last_increment = std::move(inc->delta);
                    double grow = rho > 0.0 ? 0.9 * target / rho : 2.0;
                    grow = std::clamp(grow, 0.2, 2.0);
                    // A step clipped to t_end says little about the next dt.
                    const double base = clipped ? std::max(dt, h) : h;
                    next.dt = std::clamp(base * grow, opts.dt_min, opts.dt_max);
                    return next;
                }
            }
        }
        ++rejected;
        dt *= 0.5;
    }
}

DissipationCheck dissipation_check(const FlowState& before, const FlowState& after) {
    DissipationCheck out;
    out.delta_energy = after.energy - before.energy;
    const double dt = after.t - before.t;
    if (!(dt > 0.0)) return out;
    const auto ua = after.u.values();
    const auto ub = before.u.values();
    const double s = before.u.grid().cell_volume() *
                     pairwise_reduce(ua.size(), [&](std::size_t i) {
                         const double rate = (ua[i] - ub[i]) / dt;
                         return std::exp(2.0 * (ua[i] + ub[i])) * rate * rate;
                     });
    out.dissipation_estimate = -2.0 * s * dt;
    return out;
}

namespace {

DiagnosticsRow make_row(const FlowState& s) {
    DiagnosticsRow r;
    r.t = s.t;
    r.energy = s.energy;
    r.conformal_volume = conformal_volume(s.u);
    r.raw_volume_drift = s.raw_volume_drift;
    const SublevelDiagnostics d = sublevel_diagnostics(s.u, s.initial_volume);
    r.sublevel_volume = d.sublevel_volume;
    r.Y = d.Y;
    r.max_u = s.u.max();
    r.min_u = s.u.min();
    r.dt = s.step_count == 0 ? s.dt : s.last_dt;
    r.residual_norm = s.residual_norm;
    return r;
}

}  // namespace

Trajectory run(const ScalarField& u0, const ProblemData& p, const FlowOptions& opts) {
    FlowState state = initial_state(u0, p, opts);
    const double e0 = state.energy;
    std::vector<DiagnosticsRow> rows{make_row(state)};
    double dissipation = 0.0;
    double worst_increase = 0.0;
    int steady_count = 0;
    FlowOutcome outcome = FlowOutcome::reached_t_end;
    bool last_row_written = true;

    for (;;) {
        if (state.t >= opts.t_end) {
            outcome = FlowOutcome::reached_t_end;
            break;
        }
        FlowState next = [&] {
            try {
                return step(state, opts);
            } catch (const NumericalError& e) {
                if (e.failure_class() != "step_underflow") throw;
                return state;
            }
        }();
        if (next.step_count == state.step_count) {
            outcome = FlowOutcome::step_underflow;
            state.rejected_steps = next.rejected_steps;
            break;
        }
        const DissipationCheck dc = dissipation_check(state, next);
        dissipation -= dc.dissipation_estimate;
        worst_increase = std::max(worst_increase, dc.delta_energy / (1.0 + std::abs(state.energy)));
        state = std::move(next);

        last_row_written = state.step_count % opts.diagnostics_stride == 0;
        if (last_row_written) rows.push_back(make_row(state));

        if (state.residual_norm <= opts.steady_tol) {
            ++steady_count;
        } else {
            steady_count = 0;
        }
        if (steady_count >= opts.steady_window ||
            (state.last_step_stationary && state.residual_norm <= opts.steady_tol)) {
            outcome = FlowOutcome::converged_to_steady;
            break;
        }
        if (state.energy < e0 - opts.divergence_energy_drop &&
            state.u.max() > opts.divergence_max_u) {
            outcome = FlowOutcome::energy_diverging;
            break;
        }
    }
    if (!last_row_written) rows.push_back(make_row(state));
    Trajectory traj{std::move(rows), std::move(state), outcome, dissipation, worst_increase, 0};
    traj.rejected_steps = traj.final.rejected_steps;
    return traj;
}

SpectralField semi_implicit_update(const SpectralField& u_hat, const ProblemData& p, double dt,
                                   double inner_tol) {
    if (!(dt > 0.0)) throw InvalidArgument("semi_implicit_update: dt must be positive");
    const std::vector<double> symbol = detail::paneitz_symbol(p.grid());
    const ScalarField u = inverse_transform(u_hat);
    Increment inc = solve_increment(u_hat, u, p, symbol, dt, inner_tol, 5000);
    SpectralField out = u_hat;
    out += inc.delta;
    return out;
}

}  // namespace qflow
