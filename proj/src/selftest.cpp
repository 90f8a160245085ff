#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "qflow/bubbles.hpp"
#include "qflow/cli.hpp"
#include "qflow/elliptic.hpp"
#include "qflow/energy.hpp"
#include "qflow/error.hpp"
#include "qflow/fields.hpp"
#include "qflow/flow.hpp"
#include "qflow/io.hpp"
#include "qflow/operators.hpp"

namespace qflow {

namespace {

struct Check {
    std::string name;
    std::function<bool(std::string&)> run;
};

std::string num(double x) { return format_double(x); }

std::vector<Check> checks() {
    const TorusGrid g(16, 1.0);
    const double two_pi = 2.0 * std::numbers::pi;
    return {
        {"fft round trip",
         [g](std::string& d) {
             const ScalarField u = random_smooth_field(g, 1.0, 7, 3);
             const double e = max_abs_difference(inverse_transform(forward_transform(u)), u);
             d = num(e);
             return e <= 1e-13;
         }},
        {"paneitz eigenfunction",
         [g, two_pi](std::string& d) {
             const ScalarField u = cosine_field(g, 1.0, 1.0, {1, 2, 0, 1}) - ScalarField(g, 1.0);
             const double lam = std::pow(two_pi * two_pi * 6.0, 2.0);
             ScalarField expect = u;
             expect *= lam;
             const double e = max_abs_difference(apply_paneitz(u), expect) / lam;
             d = num(e);
             return e <= 1e-12;
         }},
        {"paneitz inverse",
         [g](std::string& d) {
             const ScalarField u = random_smooth_field(g, 1.0, 3, 2);
             const double e = max_abs_difference(solve_paneitz(apply_paneitz(u), 0.0), u);
             d = num(e);
             return e <= 1e-10;
         }},
        {"constant datum is stationary",
         [g](std::string& d) {
             const ProblemData p = make_problem(ScalarField(g, 10.0));
             const ScalarField grad = energy_gradient(ScalarField(g, 0.0), p);
             const double e = std::max(std::abs(grad.max()), std::abs(grad.min()));
             d = num(e);
             return e <= 1e-12;
         }},
        {"gradient matches finite differences",
         [g](std::string& d) {
             const ProblemData p = make_problem(cosine_field(g, 10.0, 0.3, {1, 0, 0, 0}));
             const ScalarField u = random_smooth_field(g, 0.5, 11);
             const ScalarField v = random_smooth_field(g, 1.0, 12);
             const double eps = 1e-5;
             const double fd = (energy(u + eps * v, p).total - energy(u - eps * v, p).total) / (2 * eps);
             ScalarField gv = energy_gradient(u, p);
             for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= v[i];
             const double an = integrate(gv);
             const double e = std::abs(fd - an) / std::max(1.0, std::abs(an));
             d = num(e);
             return e <= 1e-6;
         }},
        {"flow step dissipates energy",
         [g](std::string& d) {
             const ProblemData p = make_problem(ScalarField(g, 10.0));
             FlowOptions o;
             o.dt_init = 1e-4;
             const FlowState s0 = initial_state(random_smooth_field(g, 0.3, 5), p, o);
             const FlowState s1 = step(s0, o);
             d = num(s1.energy - s0.energy);
             return s1.energy <= s0.energy + 1e-12 * (1 + std::abs(s0.energy));
         }},
        {"newton solves a cosine datum",
         [g](std::string& d) {
             const ProblemData p = make_problem(cosine_field(g, 10.0, 0.3, {1, 0, 0, 0}));
             const EllipticSolution s = newton_solve(p, ScalarField(g, 0.0), 1e-10, 30);
             d = num(s.residual_norm);
             return s.converged;
         }},
        {"field file round trip",
         [g](std::string& d) {
             const ScalarField u = random_smooth_field(g, 2.0, 9);
             const ScalarField w = decode_field(encode_field(u));
             bool same = true;
             for (std::size_t i = 0; i < u.size(); ++i)
                 same = same && std::bit_cast<std::uint64_t>(u[i]) == std::bit_cast<std::uint64_t>(w[i]);
             d = same ? "bitwise" : "differs";
             return same;
         }},
        {"bubble total mass",
         [](std::string& d) {
             const Bubble b{{}, 3.0, 20.0};
             const double e = std::abs(bubble_mass(b) - sphere_quantum / 20.0) / (sphere_quantum / 20.0);
             d = num(e);
             return e <= 1e-14;
         }},
    };
}

}  // namespace

int run_selftest(std::ostream& out) {
    int failed = 0;
    int passed = 0;
    for (const Check& c : checks()) {
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = e.what();
        }
        out << (ok ? "PASS " : "FAIL ") << c.name << " (" << detail << ")\n";
        (ok ? passed : failed)++;
    }
    out << passed << " passed, " << failed << " failed\n";
    return failed;
}

}  // namespace qflow
