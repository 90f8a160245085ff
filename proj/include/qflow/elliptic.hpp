#pragma once

// Newton's method for the stationary problem
//
//   P u + f = k e^{4u},   \int e^{4u} = 1,
//
// and a warm-started continuation in k.

#include <string>
#include <vector>

#include "qflow/energy.hpp"

namespace qflow {

struct EllipticSolution {
    ScalarField u;
    ProblemData p;
    double residual_norm = 0.0;  ///< max |P u + f - k e^{4u}|
    int iterations = 0;
    bool converged = false;
    std::vector<double> residual_history;  ///< residual_norm before each Newton step and at exit
    std::vector<int> linear_iterations;    ///< CG iterations per Newton step
};

struct NewtonOptions {
    double tol = 1e-9;
    int max_iter = 50;
    double linear_tol = 1e-12;
    int linear_max_iter = 2000;
};

/// Newton iteration on the normalized equation. Each step solves
/// H d = -g with g = P u + f - k w, w = e^{4u} / \int e^{4u}, and the exact
/// Jacobian H v = P v - 4k (w v - w \int w v), on mean-zero functions, by
/// conjugate gradients preconditioned with (|xi|^4 + 4k mean(w))^{-1}.
/// A backtracking search on ||g||_2 guards each step and u is renormalized
/// afterwards. Hitting max_iter returns the best iterate with converged = false;
/// a failing inner solve throws NumericalError("linear_solve").
EllipticSolution newton_solve(const ProblemData& p, const ScalarField& u_init,
                              const NewtonOptions& opts = {});
EllipticSolution newton_solve(const ProblemData& p, const ScalarField& u_init, double tol,
                              int max_iter);

/// max |P u + f - k e^{4u}| and |\int (P u + f - k e^{4u})| for u as given.
struct StationaryResidual {
    double max_norm = 0.0;
    double integral = 0.0;
};
StationaryResidual stationary_residual(const ScalarField& u, const ProblemData& p);

struct ContinuationBranch {
    std::vector<double> k_values;
    std::vector<EllipticSolution> solutions;
    std::vector<double> max_u_trace;
    bool truncated = false;
    double failed_k = 0.0;  ///< first k that could not be reached when truncated
    std::string failure;
};

struct ContinuationOptions {
    NewtonOptions newton;
    int max_bisections = 6;  ///< intermediate warm starts allowed between listed k
};

/// Solves for f = k * f_shape along k_list (strictly increasing), warm-starting
/// each solve from the previous solution. A failed solve is retried through
/// bisected intermediate k values; if that does not help, the branch is
/// truncated at the failing k.
ContinuationBranch continuation(const ScalarField& f_shape, const std::vector<double>& k_list,
                                const ContinuationOptions& opts = {});
ContinuationBranch continuation(const ScalarField& f_shape, const std::vector<double>& k_list,
                                double tol, int max_iter);

}  // namespace qflow
