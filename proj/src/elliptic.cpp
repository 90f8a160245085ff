#include "qflow/elliptic.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>

#include "krylov.hpp"
#include "qflow/error.hpp"
#include "qflow/operators.hpp"
#include "spectral.hpp"

namespace qflow {

namespace {

struct Iterate {
    SpectralField u_hat;
    ScalarField u;
    ScalarField w;         // e^{4u} / \int e^{4u}
    ScalarField g;         // P u + f - k w
    double residual = 0.0; // max |P u + f - k e^{4u}|
    double g_l2 = 0.0;
};

class NewtonProblem {
public:
    explicit NewtonProblem(const ProblemData& p)
        : p_(p), symbol_(detail::paneitz_symbol(p.grid())) {}

    /// Normalizes u_hat and evaluates everything the step needs.
    Iterate evaluate(SpectralField u_hat) const {
        ScalarField u = inverse_transform(u_hat);
        const double shift = -0.25 * log_conformal_volume(u);
        detail::add_constant(u_hat, shift);
        u += shift;
        ScalarField pu = inverse_transform(detail::multiply(u_hat, symbol_));
        ScalarField w = detail::normalized_density(u);
        ScalarField g(p_.grid());
        double res = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] = pu[i] + p_.f[i] - p_.k * w[i];
            res = std::max(res, std::abs(pu[i] + p_.f[i] - p_.k * std::exp(4.0 * u[i])));
        }
        const auto gv = g.values();
        const double l2 = std::sqrt(p_.grid().cell_volume() *
                                    pairwise_reduce(gv.size(), [&](std::size_t i) { return gv[i] * gv[i]; }));
        if (!std::isfinite(res) || !std::isfinite(l2))
            throw NumericalError("overflow", "non-finite Newton residual (max u = " +
                                                 std::to_string(u.max()) + ")");
        return Iterate{std::move(u_hat), std::move(u), std::move(w), std::move(g), res, l2};
    }

    detail::KrylovResult solve_step(const Iterate& it, const NewtonOptions& opts) const {
        const TorusGrid& grid = p_.grid();
        SpectralField rhs = forward_transform(it.g);
        rhs *= -1.0;
        rhs[0] = 0.0;
        const SpectralField w_hat = forward_transform(it.w);
        const double four_k = 4.0 * p_.k;
        const double sigma = std::abs(four_k) / grid.volume();

        auto apply = [&](const SpectralField& v) {
            const ScalarField v_real = detail::inverse_transform_trusted(v);
            ScalarField wv = it.w;
            for (std::size_t i = 0; i < wv.size(); ++i) wv[i] *= v_real[i];
            const double wv_int = integrate(wv);
            SpectralField out = detail::multiply(v, symbol_);
            SpectralField wv_hat = forward_transform(wv);
            wv_hat.add_scaled(-wv_int, w_hat);
            out.add_scaled(-four_k, wv_hat);
            out[0] = 0.0;
            return out;
        };
        // Mean-zero space: the zero mode is projected out.
        std::vector<double> inv(symbol_.size());
        inv[0] = 0.0;
        for (std::size_t i = 1; i < inv.size(); ++i) inv[i] = 1.0 / (symbol_[i] + sigma);
        return detail::pcg(rhs, apply, inv, opts.linear_tol, opts.linear_max_iter);
    }

private:
    const ProblemData& p_;
    std::vector<double> symbol_;
};

}  // namespace

StationaryResidual stationary_residual(const ScalarField& u, const ProblemData& p) {
    ScalarField r = apply_paneitz(u);
    double mx = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] += p.f[i] - p.k * std::exp(4.0 * u[i]);
        mx = std::max(mx, std::abs(r[i]));
    }
    return {mx, integrate(r)};
}

EllipticSolution newton_solve(const ProblemData& p, const ScalarField& u_init,
                              const NewtonOptions& opts) {
    if (!(opts.tol > 0.0)) throw InvalidArgument("newton_solve: tol must be positive");
    if (opts.max_iter < 0) throw InvalidArgument("newton_solve: max_iter must be nonnegative");
    if (!(u_init.grid() == p.grid())) throw InvalidArgument("newton_solve: grid mismatch");
    if (!u_init.all_finite()) throw InvalidArgument("newton_solve: initial guess is not finite");

    const NewtonProblem problem(p);
    Iterate current = problem.evaluate(forward_transform(u_init));
    Iterate best = current;
    EllipticSolution sol{current.u, p, current.residual, 0, false, {}, {}};

    int it = 0;
    for (;; ++it) {
        sol.residual_history.push_back(current.residual);
        if (current.residual < best.residual) best = current;
        if (current.residual <= opts.tol) {
            best = current;
            sol.converged = true;
            break;
        }
        if (it == opts.max_iter) break;

        const detail::KrylovResult step = problem.solve_step(current, opts);
        sol.linear_iterations.push_back(step.iterations);

        bool accepted = false;
        for (double alpha = 1.0; alpha > 1e-9; alpha *= 0.5) {
            SpectralField trial_hat = current.u_hat;
            trial_hat.add_scaled(alpha, step.x);
            Iterate trial = problem.evaluate(std::move(trial_hat));
            if (trial.g_l2 <= (1.0 - 1e-4 * alpha) * current.g_l2) {
                current = std::move(trial);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            ++it;
            break;
        }
    }
    sol.u = best.u;
    sol.residual_norm = best.residual;
    sol.iterations = it;
    return sol;
}

EllipticSolution newton_solve(const ProblemData& p, const ScalarField& u_init, double tol,
                              int max_iter) {
    NewtonOptions o;
    o.tol = tol;
    o.max_iter = max_iter;
    return newton_solve(p, u_init, o);
}

ContinuationBranch continuation(const ScalarField& f_shape, const std::vector<double>& k_list,
                                const ContinuationOptions& opts) {
    const double mass = integrate(f_shape);
    if (std::abs(mass - 1.0) > 1e-10)
        throw InvalidArgument("continuation: f_shape must integrate to 1, got " +
                              std::to_string(mass));
    for (std::size_t i = 1; i < k_list.size(); ++i)
        if (!(k_list[i] > k_list[i - 1]))
            throw InvalidArgument("continuation: k_list must be strictly increasing");

    const TorusGrid& grid = f_shape.grid();
    auto problem_at = [&](double k) { return make_problem(k * f_shape); };
    auto attempt = [&](double k, const ScalarField& warm) -> std::optional<EllipticSolution> {
        try {
            EllipticSolution s = newton_solve(problem_at(k), warm, opts.newton);
            if (s.converged) return s;
        } catch (const NumericalError&) {
        }
        return std::nullopt;
    };
    // Reaches k_hi from a converged state at k_lo through bisected warm starts.
    std::function<std::optional<EllipticSolution>(double, const ScalarField&, double, int)> reach =
        [&](double k_lo, const ScalarField& u_lo, double k_hi,
            int depth) -> std::optional<EllipticSolution> {
        if (auto s = attempt(k_hi, u_lo)) return s;
        if (depth >= opts.max_bisections) return std::nullopt;
        const double k_mid = 0.5 * (k_lo + k_hi);
        const auto mid = reach(k_lo, u_lo, k_mid, depth + 1);
        if (!mid) return std::nullopt;
        return reach(k_mid, mid->u, k_hi, depth + 1);
    };

    ContinuationBranch branch;
    double k_prev = 0.0;
    ScalarField u_prev(grid, -0.25 * std::log(grid.volume()));
    for (double k : k_list) {
        auto s = branch.solutions.empty() ? attempt(k, u_prev) : reach(k_prev, u_prev, k, 0);
        if (!s && branch.solutions.empty()) s = reach(0.0, u_prev, k, 0);
        if (!s) {
            branch.truncated = true;
            branch.failed_k = k;
            std::ostringstream msg;
            msg << "Newton failed at k = " << k << " after " << opts.max_bisections
                << " bisections";
            branch.failure = msg.str();
            break;
        }
        branch.k_values.push_back(k);
        branch.max_u_trace.push_back(s->u.max());
        u_prev = s->u;
        k_prev = k;
        branch.solutions.push_back(std::move(*s));
    }
    return branch;
}

ContinuationBranch continuation(const ScalarField& f_shape, const std::vector<double>& k_list,
                                double tol, int max_iter) {
    ContinuationOptions o;
    o.newton.tol = tol;
    o.newton.max_iter = max_iter;
    return continuation(f_shape, k_list, o);
}

}  // namespace qflow
