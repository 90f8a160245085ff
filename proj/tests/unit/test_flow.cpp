#include <gtest/gtest.h>

#include <cmath>

#include "qflow/elliptic.hpp"
#include "qflow/error.hpp"
#include "qflow/fields.hpp"
#include "qflow/flow.hpp"
#include "qflow/operators.hpp"
#include "support.hpp"

using namespace qflow;
using qflow::test::max_abs;

namespace {

FlowOptions fixed_dt(double dt) {
    FlowOptions o;
    o.dt_init = dt;
    o.dt_max = dt;
    o.dt_min = dt * 1e-6;
    o.defect_target = 1e9;
    return o;
}

}  // namespace

TEST(FlowRhs, VanishesAtConstantState) {
    const TorusGrid g(8, 1.0);
    EXPECT_LE(max_abs(flow_rhs(ScalarField(g, 0.0), make_problem(ScalarField(g, 10.0)))), 1e-14);
}

// \int e^{4u} u_t = -1/2 \int (P u + f) + 1/2 k = 0 for every u.
TEST(FlowRhs, WeightedMeanVanishes) {
    const TorusGrid g(16, 1.0);
    const ProblemData p = make_problem(cosine_field(g, 10.0, 0.3, {1, 0, 0, 0}));
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const ScalarField u = normalize(random_smooth_field(g, 0.5, seed));
        ScalarField w = flow_rhs(u, p);
        double scale = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            scale = std::max(scale, std::abs(w[i]));
            w[i] *= std::exp(4.0 * u[i]);
        }
        EXPECT_NEAR(integrate(w), 0.0, 1e-12 * scale);
    }
}

TEST(FlowRhs, PointwiseSign) {
    const TorusGrid g(8, 1.0);
    // f = 0 removes the mean term; u = cos bump has P u > 0 at its peak.
    const ProblemData p = make_problem(ScalarField(g, 0.0));
    const ScalarField u = cosine_field(g, 0.1, 1.0, {1, 0, 0, 0});
    const ScalarField r = flow_rhs(u, p);
    EXPECT_LT(r[g.index(0, 0, 0, 0)], 0.0);
    EXPECT_GT(r[g.index(4, 0, 0, 0)], 0.0);
}

TEST(FlowOptions, Validation) {
    FlowOptions o;
    EXPECT_NO_THROW(o.validate());
    o.dt_min = 1.0;
    EXPECT_THROW(o.validate(), InvalidArgument);
    o = FlowOptions{};
    o.t_end = 0.0;
    EXPECT_THROW(o.validate(), InvalidArgument);
    o = FlowOptions{};
    o.diagnostics_stride = 0;
    EXPECT_THROW(o.validate(), InvalidArgument);
    o = FlowOptions{};
    o.defect_relax_window = -1.0;
    EXPECT_THROW(o.validate(), InvalidArgument);
}

TEST(Step, ConstantStateOnlyAdvancesTime) {
    const TorusGrid g(8, 1.0);
    const FlowOptions o = fixed_dt(1e-3);
    const FlowState s0 = initial_state(ScalarField(g, 0.0), make_problem(ScalarField(g, 10.0)), o);
    const FlowState s1 = step(s0, o);
    EXPECT_TRUE(test::bitwise_equal(s0.u, s1.u));
    EXPECT_DOUBLE_EQ(s1.t, 1e-3);
    EXPECT_EQ(s1.step_count, 1);
    EXPECT_TRUE(s1.last_step_stationary);
}

// The step keeps \int e^{4u} du = 0, so V+ - V = \int e^{4u} (e^{4 du} - 1 - 4 du)
// = 8 \int e^{4u} du^2 + O(du^3).
TEST(Step, DecreasesEnergyWithSecondOrderVolumeDrift) {
    const TorusGrid g(16, 1.0);
    const ProblemData p = make_problem(ScalarField(g, 10.0));
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const ScalarField u0 = random_smooth_field(g, 0.05, seed, 1);
        double previous = 0.0;
        for (double dt : {1e-4, 5e-5}) {
            FlowOptions o = fixed_dt(dt);
            o.volume_renormalize = false;
            const FlowState s0 = initial_state(u0, p, o);
            const FlowState s1 = step(s0, o);
            EXPECT_DOUBLE_EQ(s1.last_dt, dt);
            EXPECT_LT(s1.energy, s0.energy);
            const double drift = conformal_volume(s1.u) - s0.initial_volume;
            EXPECT_DOUBLE_EQ(s1.raw_volume_drift, drift);
            ScalarField w(g);
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double du = s1.u[i] - u0[i];
                w[i] = 8.0 * std::exp(4.0 * u0[i]) * du * du;
            }
            EXPECT_NEAR(drift, integrate(w), 0.05 * drift);
            if (previous > 0.0) {
                EXPECT_NEAR(drift / previous, 0.25, 0.025);
            }
            previous = drift;
        }
    }
}

TEST(Step, RenormalizationRestoresVolume) {
    const TorusGrid g(16, 1.0);
    const ProblemData p = make_problem(cosine_field(g, 10.0, 0.3, {0, 1, 0, 0}));
    const FlowOptions o;
    FlowState s = initial_state(random_smooth_field(g, 0.3, 7), p, o);
    for (int i = 0; i < 5; ++i) {
        s = step(s, o);
        EXPECT_NEAR(conformal_volume(s.u), s.initial_volume, 1e-12 * s.initial_volume);
    }
    EXPECT_NE(s.raw_volume_drift, 0.0);
}

TEST(Step, StiffDataForcesRejection) {
    const TorusGrid g(16, 1.0);
    const ProblemData p = make_problem(ScalarField(g, 10.0));
    FlowOptions o;
    o.dt_init = o.dt_max;
    const ScalarField u0 = cosine_field(g, 0.5, 1.0, {4, 3, 0, 2}) - ScalarField(g, 0.5);
    const FlowState s1 = step(initial_state(u0, p, o), o);
    EXPECT_GE(s1.rejected_steps, 1);
    EXPECT_LT(s1.last_dt, o.dt_max);
    EXPECT_LE(s1.energy, initial_state(u0, p, o).energy);
}

TEST(Step, UnderflowIsReported) {
    const TorusGrid g(16, 1.0);
    const ProblemData p = make_problem(ScalarField(g, 10.0));
    FlowOptions o;
    o.dt_init = o.dt_max;
    o.dt_min = o.dt_max;
    const ScalarField u0 = cosine_field(g, 0.5, 1.0, {4, 3, 0, 2}) - ScalarField(g, 0.5);
    try {
        step(initial_state(u0, p, o), o);
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_EQ(e.failure_class(), "step_underflow");
    }
    EXPECT_EQ(run(u0, p, o).outcome, FlowOutcome::step_underflow);
}

TEST(Step, NewtonSolutionIsAFixedPoint) {
    const TorusGrid g(16, 1.0);
    const ProblemData p = make_problem(cosine_field(g, 10.0, 0.3, {1, 0, 0, 0}));
    const double tol = 1e-10;
    const EllipticSolution sol = newton_solve(p, ScalarField(g, 0.0), tol, 50);
    ASSERT_TRUE(sol.converged);
    const FlowOptions o = fixed_dt(1e-3);
    const FlowState s1 = step(initial_state(sol.u, p, o), o);
    EXPECT_LE(max_abs_difference(s1.u, sol.u), 10 * tol);
}

// Local error of one step against a fine-step reference is O(dt^2).
TEST(Step, SchemeIsFirstOrder) {
    const TorusGrid g(8, 1.0);
    const ProblemData p = make_problem(cosine_field(g, 10.0, 0.3, {1, 0, 0, 0}));
    const SpectralField u0 = forward_transform(random_smooth_field(g, 0.1, 3, 1));
    auto defect = [&](double dt) {
        SpectralField ref = u0;
        for (int i = 0; i < 256; ++i) ref = semi_implicit_update(ref, p, dt / 256);
        return max_abs_difference(inverse_transform(semi_implicit_update(u0, p, dt)),
                                  inverse_transform(ref));
    };
    const double coarse = defect(2e-4);
    const double fine = defect(1e-4);
    EXPECT_GE(coarse / fine, 1.8);
}

TEST(Dissipation, StationaryStateGivesZero) {
    const TorusGrid g(8, 1.0);
    const FlowOptions o = fixed_dt(1e-3);
    const FlowState s0 = initial_state(ScalarField(g, 0.0), make_problem(ScalarField(g, 10.0)), o);
    const DissipationCheck d = dissipation_check(s0, step(s0, o));
    EXPECT_EQ(d.delta_energy, 0.0);
    EXPECT_EQ(d.dissipation_estimate, 0.0);
}

TEST(Dissipation, MatchesEnergyChangeForSmallSteps) {
    const TorusGrid g(16, 1.0);
    const ProblemData p = make_problem(cosine_field(g, 10.0, 0.3, {1, 0, 0, 0}));
    const FlowOptions o = fixed_dt(2e-6);
    FlowState s = initial_state(random_smooth_field(g, 0.2, 4), p, o);
    for (int i = 0; i < 3; ++i) {
        const FlowState next = step(s, o);
        const DissipationCheck d = dissipation_check(s, next);
        EXPECT_LE(d.delta_energy, o.energy_tolerance * (1 + std::abs(s.energy)));
        EXPECT_LE(std::abs(d.delta_energy - d.dissipation_estimate), 0.05 * std::abs(d.delta_energy) + 1e-12);
        s = next;
    }
}

TEST(Run, ConstantStateConvergesAtFirstStep) {
    const TorusGrid g(8, 1.0);
    const Trajectory t = run(ScalarField(g, 0.0), make_problem(ScalarField(g, 10.0)), FlowOptions{});
    EXPECT_EQ(t.outcome, FlowOutcome::converged_to_steady);
    EXPECT_EQ(t.final.step_count, 1);
    EXPECT_EQ(t.rows.size(), 2u);
}

TEST(Run, ReachesEndTimeWithMonotoneEnergy) {
    const TorusGrid g(16, 1.0);
    const ProblemData p = make_problem(ScalarField(g, 10.0));
    FlowOptions o;
    o.t_end = 5e-3;
    o.diagnostics_stride = 3;
    const Trajectory t = run(random_smooth_field(g, 0.3, 2), p, o);
    EXPECT_EQ(t.outcome, FlowOutcome::reached_t_end);
    EXPECT_DOUBLE_EQ(t.final.t, o.t_end);
    EXPECT_LE(t.max_energy_increase, o.energy_tolerance);
    for (std::size_t i = 1; i < t.rows.size(); ++i) {
        EXPECT_GT(t.rows[i].t, t.rows[i - 1].t);
        EXPECT_LE(t.rows[i].energy, t.rows[i - 1].energy + o.energy_tolerance * (1 + std::abs(t.rows[i - 1].energy)));
        EXPECT_NEAR(t.rows[i].conformal_volume, t.rows[0].conformal_volume, 1e-12);
    }
    EXPECT_DOUBLE_EQ(t.rows.back().t, o.t_end);
    EXPECT_GT(t.dissipation_total, 0.0);
}

TEST(Run, SmoothRunConvergesToNewtonSolution) {
    const TorusGrid g(16, 1.0);
    const ProblemData p = make_problem(cosine_field(g, 10.0, 0.3, {1, 0, 0, 0}));
    FlowOptions o;
    o.t_end = 10.0;
    const ScalarField u0 = cosine_field(g, 0.01, 1.0, {1, 0, 0, 0}) - ScalarField(g, 0.01);
    const Trajectory t = run(u0, p, o);
    ASSERT_EQ(t.outcome, FlowOutcome::converged_to_steady);
    EXPECT_LE(t.final.residual_norm, 1e-8);
    const EllipticSolution sol = newton_solve(p, ScalarField(g, 0.0), 1e-11, 50);
    ASSERT_TRUE(sol.converged);
    EXPECT_LE(max_abs_difference(normalize(t.final.u), sol.u), 1e-6);
    const double spent = t.rows.front().energy - t.final.energy;
    EXPECT_NEAR(t.dissipation_total, spent, 0.05 * spent);
}

TEST(Run, OutcomeNames) {
    EXPECT_EQ(to_string(FlowOutcome::reached_t_end), "reached_t_end");
    EXPECT_EQ(to_string(FlowOutcome::converged_to_steady), "converged_to_steady");
    EXPECT_EQ(to_string(FlowOutcome::energy_diverging), "energy_diverging");
    EXPECT_EQ(to_string(FlowOutcome::step_underflow), "step_underflow");
}
