#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>

#include "qflow/bubbles.hpp"
#include "qflow/error.hpp"
#include "qflow/fields.hpp"
#include "support.hpp"

using namespace qflow;

namespace {

constexpr double pi = std::numbers::pi;

// 2 pi^2 \int_0^R r^3 e^{4 xi(r)} dr by adaptive Gauss-Kronrod.
double quadrature_mass(const Bubble& b, double R) {
    auto density = [&](double r) {
        const double s = 1.0 + b.lambda * b.lambda * r * r;
        return 2.0 * pi * pi * r * r * r * (6.0 / b.k) * 16.0 * std::pow(b.lambda, 4) / std::pow(s, 4);
    };
    if (std::isinf(R)) {
        // r = t / (1 - t) maps [0, 1) onto [0, inf).
        return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
            [&](double t) {
                if (t >= 1.0) return 0.0;
                const double r = t / (1.0 - t);
                return density(r) / ((1.0 - t) * (1.0 - t));
            },
            0.0, 1.0, 12, 1e-13);
    }
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(density, 0.0, R, 12, 1e-13);
}

const Point mid{0.5, 0.5, 0.5, 0.5};

}  // namespace

TEST(BubbleProfile, CenterValues) {
    EXPECT_NEAR(bubble_eval({{}, 1.0, 6.0}, {}), std::log(2.0), 1e-15);
    // log 2 - (1/4) log(16 pi^2 / 6), evaluated in extended precision.
    EXPECT_NEAR(bubble_eval({{}, 1.0, sphere_quantum}, {}), -0.12442507561768633687, 1e-15);
    EXPECT_NEAR(0.25 * std::log(sphere_quantum / 6.0), 0.81757225617763164629, 1e-15);
}

TEST(BubbleProfile, RadialSymmetry) {
    const Bubble b{{0.1, 0.2, 0.3, 0.4}, 3.0, 20.0};
    const double r = 0.37;
    const double ref = bubble_profile(b, r);
    for (int a = 0; a < 4; ++a) {
        Point z = b.z0;
        z[a] += r;
        EXPECT_NEAR(bubble_eval(b, z), ref, 1e-14);
        z[a] -= 2 * r;
        EXPECT_NEAR(bubble_eval(b, z), ref, 1e-14);
    }
    Point diag = b.z0;
    for (double& c : diag) c += r / 2.0;
    EXPECT_NEAR(bubble_eval(b, diag), ref, 1e-14);
}

TEST(BubbleProfile, ValidatesParameters) {
    EXPECT_THROW(validate(Bubble{{}, 0.0, 1.0}), InvalidArgument);
    EXPECT_THROW(validate(Bubble{{}, 1.0, -1.0}), InvalidArgument);
    EXPECT_THROW(bubble_mass(Bubble{{}, 1.0, 1.0}, 0.0), InvalidArgument);
}

TEST(BubbleMass, TotalIsQuantumOverK) {
    for (double lambda : {0.5, 1.0, 4.0})
        for (double k : {10.0, sphere_quantum, 200.0}) {
            const Bubble b{{}, lambda, k};
            EXPECT_NEAR(bubble_mass(b), sphere_quantum / k, 1e-15 * sphere_quantum / k);
            EXPECT_NEAR(quadrature_mass(b, INFINITY), sphere_quantum / k, 1e-8);
        }
    EXPECT_DOUBLE_EQ(bubble_mass({{}, 7.0, sphere_quantum}), 1.0);
}

TEST(BubbleMass, FiniteBallsMatchQuadrature) {
    for (const auto& [lambda, R, k] : {std::tuple{1.0, 1.0, sphere_quantum}, {3.0, 0.2, 20.0},
                                       {40.0, 0.05, sphere_quantum}, {2.5, 0.7, 100.0}}) {
        const Bubble b{{}, lambda, k};
        EXPECT_NEAR(bubble_mass(b, R), quadrature_mass(b, R), 1e-10) << lambda << " " << R;
    }
}

// Values from a 30-digit evaluation of the closed form.
TEST(BubbleMass, FrozenValues) {
    EXPECT_NEAR(bubble_mass({{}, 1.0, sphere_quantum}, 1.0), 0.5, 1e-15);
    EXPECT_NEAR(bubble_mass({{}, 3.0, 20.0}, 0.2), 1.366838761347689722, 1e-14);
    EXPECT_NEAR(bubble_mass({{}, 40.0, sphere_quantum}, 0.05), 0.896, 1e-14);
    EXPECT_NEAR(bubble_mass({{}, 8.0, 2 * sphere_quantum}, 0.25), 0.448, 1e-14);
    EXPECT_NEAR(bubble_mass({{}, 2.5, 100.0}, 0.7), 1.3391941774859584403, 1e-14);
    EXPECT_NEAR(synthetic_tail_mass({{}, 40.0, sphere_quantum}, 1.0), 0.00029214763452622097814, 1e-16);
}

TEST(SyntheticBubble, MassAndCenter) {
    const TorusGrid g(32, 1.0);
    const Bubble b{{}, 20.0, sphere_quantum};
    const ScalarField u = sample_bubble_on_torus(b, g, mid);
    EXPECT_NEAR(conformal_volume(u), 1.0, 0.02);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < u.size(); ++i)
        if (u[i] > u[arg]) arg = i;
    EXPECT_LE(g.distance(g.coordinates(arg), mid), g.spacing() * (1 + 1e-12));
    EXPECT_NEAR(u[g.index(16, 16, 16, 16)], bubble_profile(b, 0.0), 1e-14);
    // Exact profile inside L/4, flat beyond 3L/8.
    EXPECT_NEAR(u[g.index(16, 16, 16, 22)], bubble_profile(b, 6.0 / 32), 1e-14);
    EXPECT_NEAR(u[g.index(0, 0, 0, 0)], bubble_profile(b, 0.375), 1e-14);
    EXPECT_THROW(sample_bubble_on_torus({{}, 10.0, sphere_quantum}, g, mid), InvalidArgument);
}

TEST(SyntheticBubble, TwoDisjointBubblesAdd) {
    const TorusGrid g(32, 1.0);
    const double k = 2 * sphere_quantum;
    const ScalarField u = sample_bubbles_on_torus({{{}, 20.0, k}, {{}, 20.0, k}},
                                                  {{0.25, 0.25, 0.25, 0.25}, {0.75, 0.25, 0.25, 0.25}}, g);
    EXPECT_NEAR(conformal_volume(u), 2.0 * sphere_quantum / k, 0.03 * 2.0 * sphere_quantum / k);
}

TEST(Detection, SingleBubble) {
    const TorusGrid g(32, 1.0);
    const ScalarField u = sample_bubble_on_torus({{}, 20.0, sphere_quantum}, g, mid);
    const auto sites = detect_concentration(u, sphere_quantum, default_rho(sphere_quantum));
    ASSERT_EQ(sites.size(), 1u);
    EXPECT_LE(g.distance(sites[0].center, mid), g.spacing() * (1 + 1e-12));
    EXPECT_TRUE(sites[0].concentrated);
    EXPECT_NEAR(sites[0].quantum_ratio, 1.0, 0.05);
    EXPECT_GE(sites[0].radius, g.spacing());
}

TEST(Detection, UniformDensityIsNotConcentrated) {
    const TorusGrid g(16, 1.0);
    for (double c : {-0.7, 0.0, 2.0}) {
        const auto sites = detect_concentration(ScalarField(g, c), 10.0, default_rho(10.0));
        for (const auto& s : sites) {
            EXPECT_GT(s.radius, 0.125);
            EXPECT_FALSE(s.concentrated);
            EXPECT_FALSE(s.quantized);
        }
    }
    EXPECT_THROW(detect_concentration(ScalarField(g, 0.0), 10.0, 1.5), InvalidArgument);
    EXPECT_THROW(detect_concentration(ScalarField(g, 0.0), -1.0, 0.1), InvalidArgument);
}

TEST(Quantization, TwoBubbles) {
    const TorusGrid g(32, 1.0);
    const double k = 2 * sphere_quantum;
    const std::vector<Point> centers{{0.25, 0.25, 0.25, 0.25}, {0.75, 0.25, 0.25, 0.25}};
    const ScalarField u = sample_bubbles_on_torus({{{}, 20.0, k}, {{}, 20.0, k}}, centers, g);
    const QuantizationReport rep = quantization_report(u, k);
    ASSERT_EQ(rep.sites.size(), 2u);
    for (const auto& s : rep.sites) {
        const double d = std::min(g.distance(s.center, centers[0]), g.distance(s.center, centers[1]));
        EXPECT_LE(d, g.spacing() * (1 + 1e-12));
        EXPECT_NEAR(s.quantum_ratio, 1.0, 0.07);
        EXPECT_TRUE(s.quantized);
    }
    EXPECT_NEAR(rep.quantum_sum, k / sphere_quantum, 0.1);
    EXPECT_LE(rep.accounting_error, 0.05);
    EXPECT_LE(rep.unmasked_fraction, 0.05);
}

TEST(Quantization, UniformFieldHasNoQuantizedSites) {
    const TorusGrid g(16, 1.0);
    const QuantizationReport rep = quantization_report(ScalarField(g, 0.0), 10.0);
    for (const auto& s : rep.sites) EXPECT_FALSE(s.quantized);
    EXPECT_EQ(rep.quantum_sum, 0.0);
}

TEST(Rescale, IdentityScaleCopiesGridValues) {
    const TorusGrid g(16, 1.0);
    const ScalarField u = random_smooth_field(g, 1.0, 3, 3);
    // points = 9 over [-1/4, 1/4] puts every sample on a grid point.
    const RescaledSamples s = rescale(u, {0.5, 0.25, 0.0, 0.75}, 1.0, 0.25, 9);
    double worst = 0.0;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        const Point z = s.z(i);
        const Point x{0.5 + z[0], 0.25 + z[1], z[2], 0.75 + z[3]};
        std::array<int, 4> j{};
        for (int a = 0; a < 4; ++a) j[a] = static_cast<int>(std::lround(g.wrap(x[a]) / g.spacing() + 16)) % 16;
        worst = std::max(worst, std::abs(s.values[i] - u[g.index(j[0], j[1], j[2], j[3])]));
    }
    EXPECT_LE(worst, 1e-13);
}

TEST(Rescale, InterpolatesBandLimitedFieldsExactly) {
    const TorusGrid g(16, 1.0);
    const std::array<int, 4> m{1, -2, 3, 0};
    const ScalarField u = cosine_field(g, 1.0, 1.0, m);
    const Point c{0.013, 0.41, 0.29, 0.7};
    const RescaledSamples s = rescale(u, c, 0.5, 0.4, 5);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        const Point z = s.z(i);
        double phase = 0.0;
        for (int a = 0; a < 4; ++a) phase += 2 * pi * m[a] * (c[a] + 0.5 * z[a]);
        EXPECT_NEAR(s.values[i], 1.0 + std::cos(phase) + std::log(0.5), 1e-12);
    }
    EXPECT_THROW(rescale(u, c, 1.0, 0.3), InvalidArgument);
    EXPECT_THROW(rescale(u, c, 0.1, 1.0, 1), InvalidArgument);
}

TEST(Rescale, BubbleBecomesUnitBubble) {
    const TorusGrid g(32, 1.0);
    const double lambda = 20.0;
    const ScalarField u = sample_bubble_on_torus({{}, lambda, sphere_quantum}, g, mid);
    const RescaledSamples s = rescale(u, mid, 1.0 / lambda, 0.25 * lambda);
    EXPECT_NEAR(s.values[s.values.size() / 2], -0.12442507561768633687, 0.02);
}

TEST(Fit, RecoversCleanBubble) {
    const TorusGrid g(32, 1.0);
    const double lambda = 20.0;
    const ScalarField u = sample_bubble_on_torus({{}, lambda, sphere_quantum}, g, mid);
    const auto sites = detect_concentration(u, sphere_quantum, default_rho(sphere_quantum));
    ASSERT_EQ(sites.size(), 1u);
    const RescaledSamples s = rescale(u, sites[0].center, 1.0 / lambda, 0.25 * lambda);
    const BubbleFit fit = bubble_fit(s, sphere_quantum);
    EXPECT_NEAR(fit.lambda_fit, 1.0, 0.01);
    for (int a = 0; a < 4; ++a) EXPECT_LE(std::abs(fit.z0_fit[a]), s.dz);
    EXPECT_LE(fit.l2_error, 1e-3);
}

TEST(Fit, ToleratesSmoothNoise) {
    const TorusGrid g(32, 1.0);
    const double lambda = 20.0;
    ScalarField u = sample_bubble_on_torus({{}, lambda, sphere_quantum}, g, mid);
    const double amp = 0.01 * (u.max() - u.min());
    u += random_smooth_field(g, amp, 17, 3);
    const RescaledSamples s = rescale(u, mid, 1.0 / lambda, 0.25 * lambda);
    EXPECT_NEAR(bubble_fit(s, sphere_quantum).lambda_fit, 1.0, 0.05);
}

TEST(Fit, ConstantFieldIsNotABubble) {
    const TorusGrid g(16, 1.0);
    const RescaledSamples s = rescale(ScalarField(g, 0.3), mid, 0.02, 10.0, 17);
    try {
        const BubbleFit fit = bubble_fit(s, sphere_quantum);
        EXPECT_GT(fit.l2_error, 0.5);
    } catch (const NumericalError& e) {
        EXPECT_EQ(e.failure_class(), "fit");
    }
}

TEST(Harnack, UniformDensityScalesLikeVolume) {
    const TorusGrid g(32, 1.0);
    const ProblemData p = make_problem(ScalarField(g, 10.0));
    const HarnackMeasurement m = harnack_measure(ScalarField(g, 0.0), p, mid, mid, 0.1, 0.4);
    EXPECT_NEAR(m.measured_exponent, 4.0, 0.1);
    EXPECT_TRUE(m.holds(0.5));
    EXPECT_LT(m.bound_exponent, -3.9);
}

TEST(Harnack, DegenerateRadiiHold) {
    const TorusGrid g(16, 1.0);
    const ProblemData p = make_problem(ScalarField(g, 10.0));
    const HarnackMeasurement m =
        harnack_measure(random_smooth_field(g, 0.5, 2), p, mid, mid, 0.2, 0.2);
    EXPECT_EQ(m.measured_exponent, 0.0);
    EXPECT_TRUE(m.holds(0.0));
    EXPECT_THROW(harnack_measure(ScalarField(g, 0.0), p, mid, mid, 0.3, 0.2), InvalidArgument);
    EXPECT_THROW(harnack_measure(ScalarField(g, 0.0), p, mid, mid, 0.1, 0.6), InvalidArgument);
}

TEST(Harnack, BubbleCenterAgainstFarBall) {
    const TorusGrid g(32, 1.0);
    const double k = sphere_quantum;
    const ScalarField u = sample_bubble_on_torus({{}, 20.0, k}, g, mid);
    const ProblemData p{ScalarField(g, k), k};
    const Point far{0.5, 0.5, 0.5, 0.0};
    const double h = g.spacing();
    for (double r : {2 * h, 4 * h}) {
        const HarnackMeasurement m = harnack_measure(u, p, mid, far, r, 0.125);
        if (!m.hypothesis_ok) continue;
        EXPECT_TRUE(m.holds(0.5)) << m.measured_exponent << " vs " << -m.bound_exponent;
    }
}
