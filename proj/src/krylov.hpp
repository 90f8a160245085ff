#pragma once

// Preconditioned conjugate gradients on spectral vectors. The inner product
// is the L^2 one (Parseval), so operators that are symmetric on the grid are
// symmetric here too. The preconditioner is diagonal in coefficient space.

#include <cmath>
#include <complex>
#include <sstream>
#include <string>
#include <vector>

#include "qflow/error.hpp"
#include "qflow/grid.hpp"

namespace qflow::detail {

struct KrylovResult {
    SpectralField x;
    int iterations = 0;
    std::vector<double> residual_history;  ///< ||r_j|| / ||b||
};

inline std::string format_history(const std::vector<double>& h) {
    std::ostringstream s;
    s.precision(3);
    s << "[";
    for (std::size_t i = 0; i < h.size(); ++i) s << (i ? ", " : "") << h[i];
    s << "]";
    return s.str();
}

/// L^4 * sum over stored modes of multiplicity * term(i). term is called once
/// per index in storage order, so it may also update vectors in place.
template <class Term>
double parseval_reduce(const TorusGrid& g, const Term& term) {
    const std::size_t h = static_cast<std::size_t>(g.half_modes());
    const std::size_t last = h - 1;
    const double s = pairwise_reduce(g.spectral_size() / h, [&](std::size_t row) {
        const std::size_t o = row * h;
        double inner = 0.0;
        const double first = term(o);
        for (std::size_t j = 1; j < last; ++j) inner += term(o + j);
        return first + term(o + last) + 2.0 * inner;
    });
    return g.volume() * s;
}

inline double real_dot(const std::complex<double>& a, const std::complex<double>& b) {
    return a.real() * b.real() + a.imag() * b.imag();
}

/// Solves A x = b to ||r|| <= tol ||b|| with preconditioner diag(inv_diag),
/// starting from x0 when given (and from zero if x0 is the worse start).
/// Throws NumericalError("linear_solve") on a non-positive curvature
/// direction, on stagnation, or when max_iter is reached; the message carries
/// the residual history.
template <class Apply>
KrylovResult pcg(const SpectralField& b, const Apply& apply, const std::vector<double>& inv_diag,
                 double tol, int max_iter, const SpectralField* x0 = nullptr) {
    const TorusGrid& g = b.grid();
    KrylovResult out{SpectralField(g), 0, {}};
    const double b_norm = std::sqrt(inner_product(b, b));
    if (b_norm == 0.0) {
        out.residual_history.push_back(0.0);
        return out;
    }
    SpectralField r = b;
    double start = 1.0;
    if (x0 != nullptr) {
        SpectralField r0 = b;
        r0.add_scaled(-1.0, apply(*x0));
        const double rel0 = std::sqrt(inner_product(r0, r0)) / b_norm;
        if (rel0 < 1.0) {
            out.x = *x0;
            r = std::move(r0);
            start = rel0;
        }
    }
    out.residual_history.push_back(start);
    if (start <= tol) return out;

    auto* xd = out.x.data().data();
    auto* rd = r.data().data();
    SpectralField z(g);
    auto* zd = z.data().data();
    const double* inv = inv_diag.data();
    double rz = parseval_reduce(g, [&](std::size_t i) {
        zd[i] = inv[i] * rd[i];
        return real_dot(rd[i], zd[i]);
    });
    SpectralField p = z;
    auto* pd = p.data().data();
    int stalled = 0;
    double best = start;
    for (int it = 1; it <= max_iter; ++it) {
        const SpectralField ap = apply(p);
        const auto* apd = ap.data().data();
        const double curvature = parseval_reduce(g, [&](std::size_t i) { return real_dot(pd[i], apd[i]); });
        if (!(curvature > 0.0))
            throw NumericalError("linear_solve",
                                 "non-positive curvature in conjugate gradients; residual history " +
                                     format_history(out.residual_history));
        const double alpha = rz / curvature;
        double rz_next = 0.0;
        const double r2 = parseval_reduce(g, [&](std::size_t i) {
            xd[i] += alpha * pd[i];
            rd[i] -= alpha * apd[i];
            return std::norm(rd[i]);
        });
        const double rel = std::sqrt(r2) / b_norm;
        out.residual_history.push_back(rel);
        out.iterations = it;
        if (!std::isfinite(rel))
            throw NumericalError("linear_solve", "non-finite residual in conjugate gradients");
        if (rel <= tol) return out;
        if (rel < 0.5 * best) {
            best = rel;
            stalled = 0;
        } else if (++stalled > 50) {
            throw NumericalError("linear_solve", "conjugate gradients stagnated; residual history " +
                                                     format_history(out.residual_history));
        }
        rz_next = parseval_reduce(g, [&](std::size_t i) {
            zd[i] = inv[i] * rd[i];
            return real_dot(rd[i], zd[i]);
        });
        const double beta = rz_next / rz;
        for (std::size_t i = 0; i < p.size(); ++i) pd[i] = zd[i] + beta * pd[i];
        rz = rz_next;
    }
    throw NumericalError("linear_solve", "conjugate gradients hit the iteration limit; history " +
                                             format_history(out.residual_history));
}

}  // namespace qflow::detail
