#include "qflow/energy.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "qflow/error.hpp"
#include "qflow/operators.hpp"

namespace qflow {

namespace {

// Exponents above this are evaluated relative to max(u).
constexpr double shift_threshold = 300.0;
// log(DBL_MAX) ~ 709.78.
constexpr double max_log_double = 709.0;

[[noreturn]] void throw_overflow(const char* what, const ScalarField& u) {
    std::ostringstream msg;
    msg << what << " overflows (max u = " << u.max() << ")";
    throw NumericalError("overflow", msg.str());
}

}  // namespace

ProblemData make_problem(ScalarField f) {
    const double k = integrate(f);
    return ProblemData{std::move(f), k};
}

double total_curvature(const ScalarField& f) { return integrate(f); }

double log_conformal_volume(const ScalarField& u) {
    const double top = u.max();
    const double shift = 4.0 * top > shift_threshold ? top : 0.0;
    const auto vals = u.values();
    const double s = pairwise_reduce(vals.size(), [&](std::size_t i) {
        return std::exp(4.0 * (vals[i] - shift));
    });
    return 4.0 * shift + std::log(u.grid().cell_volume() * s);
}

double conformal_volume(const ScalarField& u) {
    const double lv = log_conformal_volume(u);
    if (lv > max_log_double) throw_overflow("conformal volume", u);
    return std::exp(lv);
}

ScalarField normalize(ScalarField u) {
    const double lv = log_conformal_volume(u);
    u += -0.25 * lv;
    return u;
}

namespace detail {

double paneitz_quadratic_form(const SpectralField& u_hat) {
    const TorusGrid& g = u_hat.grid();
    std::vector<double> terms(u_hat.size());
    for_each_mode(g, [&](std::size_t i, int m1, int m2, int m3, int m4, double w) {
        const double k2 = wave_norm2(g, m1, m2, m3, m4);
        terms[i] = w * k2 * k2 * std::norm(u_hat[i]);
    });
    return g.volume() * pairwise_sum(terms);
}

EnergyReport energy(const SpectralField& u_hat, const ScalarField& u, const ProblemData& p) {
    EnergyReport r;
    const double lv = log_conformal_volume(u);
    if (lv > max_log_double) throw_overflow("conformal volume", u);
    r.conformal_volume = std::exp(lv);
    r.quadratic = 0.5 * paneitz_quadratic_form(u_hat);
    const auto uv = u.values();
    const auto fv = p.f.values();
    r.linear = u.grid().cell_volume() *
               pairwise_reduce(uv.size(), [&](std::size_t i) { return fv[i] * uv[i]; });
    r.log_term = 0.25 * p.k * lv;
    r.total = r.quadratic + r.linear - r.log_term;
    return r;
}

ScalarField normalized_density(const ScalarField& u) {
    const double lv = log_conformal_volume(u);
    ScalarField w(u.grid());
    for (std::size_t i = 0; i < u.size(); ++i) w[i] = std::exp(4.0 * u[i] - lv);
    return w;
}

}  // namespace detail

EnergyReport energy(const ScalarField& u, const ProblemData& p) {
    return detail::energy(forward_transform(u), u, p);
}

ScalarField energy_gradient(const ScalarField& u, const ProblemData& p) {
    const double lv = log_conformal_volume(u);
    if (lv > max_log_double) throw_overflow("conformal volume", u);
    ScalarField g = apply_paneitz(u);
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += p.f[i] - p.k * std::exp(4.0 * u[i] - lv);
    return g;
}

double adams_deficit(const ScalarField& u) {
    const double mean = integrate(u) / u.grid().volume();
    ScalarField centered = u;
    centered += -mean;
    const double quad = detail::paneitz_quadratic_form(forward_transform(u));
    return log_conformal_volume(centered) - quad / (4.0 * std::numbers::pi * std::numbers::pi);
}

SublevelDiagnostics sublevel_diagnostics(const ScalarField& u, double reference_volume) {
    if (!(reference_volume > 0.0))
        throw InvalidArgument("sublevel_diagnostics: reference volume must be positive");
    const TorusGrid& g = u.grid();
    SublevelDiagnostics d;
    d.alpha0 = 0.25 * std::log(reference_volume / (2.0 * g.volume()));
    std::size_t count = 0;
    for (double v : u.values())
        if (v >= d.alpha0) ++count;
    d.sublevel_volume = g.cell_volume() * static_cast<double>(count);
    if (4.0 * u.max() > max_log_double) throw_overflow("u e^{4u}", u);
    const auto uv = u.values();
    d.Y = g.cell_volume() *
          pairwise_reduce(uv.size(), [&](std::size_t i) { return uv[i] * std::exp(4.0 * uv[i]); });
    return d;
}

}  // namespace qflow
