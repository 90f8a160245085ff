#include "qflow/bubbles.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qflow/error.hpp"

namespace qflow {

namespace {

constexpr double pi = std::numbers::pi;

double smoothstep5(double s) {
    s = std::clamp(s, 0.0, 1.0);
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

double blended_profile(const Bubble& b, double r, double period) {
    const double r0 = 0.25 * period;
    const double r1 = 0.375 * period;
    const double far = bubble_profile(b, r1);
    if (r <= r0) return bubble_profile(b, r);
    if (r >= r1) return far;
    const double s = smoothstep5((r - r0) / (r1 - r0));
    return (1.0 - s) * bubble_profile(b, r) + s * far;
}

// Squared minimum-image index distance between flat indices and the origin.
std::vector<int> squared_index_radius(const TorusGrid& g) {
    const int n = g.n();
    std::vector<int> sq(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int d = std::min(i, n - i);
        sq[static_cast<std::size_t>(i)] = d * d;
    }
    std::vector<int> out(g.total_points());
    std::size_t flat = 0;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c)
                for (int d = 0; d < n; ++d, ++flat)
                    out[flat] = sq[a] + sq[b] + sq[c] + sq[d];
    return out;
}

struct BallMax {
    double mass = 0.0;
    std::size_t index = 0;
};

// Ball sums of a density over every center, by FFT convolution with the
// lattice ball {d^2 <= d2}.
class BallScanner {
public:
    BallScanner(const ScalarField& density)
        : grid_(density.grid()),
          density_hat_(forward_transform(density)),
          radius2_(squared_index_radius(grid_)) {}

    ScalarField sums(int d2) const {
        ScalarField indicator(grid_);
        for (std::size_t i = 0; i < indicator.size(); ++i) indicator[i] = radius2_[i] <= d2 ? 1.0 : 0.0;
        SpectralField prod = forward_transform(indicator);
        const double scale = static_cast<double>(grid_.total_points()) * grid_.cell_volume();
        for (std::size_t i = 0; i < prod.size(); ++i) prod[i] *= scale * density_hat_[i];
        return inverse_transform(prod);
    }

    BallMax best(int d2) const {
        const ScalarField s = sums(d2);
        const double top = s.max();
        // Ties within roundoff go to the lowest flat index.
        const double cut = top - 1e-12 * std::abs(top);
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] >= cut) return {s[i], i};
        return {top, 0};
    }

private:
    TorusGrid grid_;
    SpectralField density_hat_;
    std::vector<int> radius2_;
};

void zero_ball(ScalarField& density, const Point& center, double radius) {
    const TorusGrid& g = density.grid();
    const double r2 = radius * radius * (1.0 + 1e-12);
    for (std::size_t i = 0; i < density.size(); ++i) {
        const Point x = g.coordinates(i);
        double s = 0.0;
        for (int a = 0; a < 4; ++a) {
            const double d = g.wrap(x[a] - center[a]);
            s += d * d;
        }
        if (s <= r2) density[i] = 0.0;
    }
}

double ball_or_total(const ScalarField& f, const Point& c, double radius) {
    if (radius <= 0.5 * f.grid().period()) return ball_integral(f, c, radius);
    return integrate(f);
}

}  // namespace

void validate(const Bubble& b) {
    if (!(b.lambda > 0.0) || !std::isfinite(b.lambda))
        throw InvalidArgument("bubble: lambda must be positive");
    if (!(b.k > 0.0) || !std::isfinite(b.k)) throw InvalidArgument("bubble: k must be positive");
}

double bubble_profile(const Bubble& b, double r) {
    validate(b);
    const double lr = b.lambda * r;
    return std::log(2.0 * b.lambda / (1.0 + lr * lr)) - 0.25 * std::log(b.k / 6.0);
}

double bubble_eval(const Bubble& b, const Point& z) {
    double s = 0.0;
    for (int a = 0; a < 4; ++a) s += (z[a] - b.z0[a]) * (z[a] - b.z0[a]);
    return bubble_profile(b, std::sqrt(s));
}

double bubble_mass(const Bubble& b, double R) {
    validate(b);
    if (!(R > 0.0)) throw InvalidArgument("bubble_mass: radius must be positive");
    const double total = sphere_quantum / b.k;
    if (std::isinf(R)) return total;
    const double S = b.lambda * b.lambda * R * R;
    const double t = 1.0 / (1.0 + S);
    const double one_minus_t = S / (1.0 + S);
    return total * one_minus_t * one_minus_t * (1.0 + 2.0 * t);
}

double synthetic_tail_mass(const Bubble& b, double period) {
    return bubble_mass(b) - bubble_mass(b, 0.25 * period);
}

ScalarField sample_bubble_on_torus(const Bubble& b, const TorusGrid& grid, const Point& center) {
    validate(b);
    if (b.lambda * grid.period() < 20.0)
        throw InvalidArgument("sample_bubble_on_torus: need lambda * L >= 20, got " +
                              std::to_string(b.lambda * grid.period()));
    ScalarField u(grid);
    for (std::size_t i = 0; i < u.size(); ++i)
        u[i] = blended_profile(b, grid.distance(grid.coordinates(i), center), grid.period());
    return u;
}

ScalarField sample_bubbles_on_torus(const std::vector<Bubble>& bubbles,
                                    const std::vector<Point>& centers, const TorusGrid& grid) {
    if (bubbles.empty() || bubbles.size() != centers.size())
        throw InvalidArgument("sample_bubbles_on_torus: need one center per bubble");
    std::vector<ScalarField> parts;
    for (std::size_t j = 0; j < bubbles.size(); ++j)
        parts.push_back(sample_bubble_on_torus(bubbles[j], grid, centers[j]));
    ScalarField u(grid);
    for (std::size_t i = 0; i < u.size(); ++i) {
        double top = parts[0][i];
        for (const auto& p : parts) top = std::max(top, p[i]);
        double s = 0.0;
        for (const auto& p : parts) s += std::exp(4.0 * (p[i] - top));
        u[i] = top + 0.25 * std::log(s);
    }
    return u;
}

double default_rho(double k) {
    if (!(k > 0.0)) throw InvalidArgument("default_rho: k must be positive");
    return pi * pi / k;
}

std::vector<ConcentrationSite> detect_concentration(const ScalarField& u, double k, double rho,
                                                    const DetectionOptions& opts) {
    if (!(k > 0.0)) throw InvalidArgument("detect_concentration: k must be positive");
    if (!(rho > 0.0 && rho < 1.0))
        throw InvalidArgument("detect_concentration: rho must lie in (0, 1) of the total volume");
    const TorusGrid& g = u.grid();
    const int n = g.n();
    const double h = g.spacing();
    const double L = g.period();
    const double total = std::exp(log_conformal_volume(u));
    ScalarField density = detail::normalized_density(u);

    std::vector<ConcentrationSite> sites;
    const int d2_max = n * n;  // radius L reaches every point
    while (static_cast<int>(sites.size()) < opts.max_sites) {
        const BallScanner scan(density);
        if (scan.best(d2_max).mass < rho) break;
        int lo = -1, hi = d2_max;
        while (hi - lo > 1) {
            const int mid = lo + (hi - lo) / 2;
            (scan.best(mid).mass >= rho ? hi : lo) = mid;
        }
        const int d2 = std::max(hi, 1);  // radius floored at one spacing
        const BallMax at = scan.best(d2);

        ConcentrationSite s;
        s.center_index = at.index;
        s.center = g.coordinates(at.index);
        s.radius = h * std::sqrt(static_cast<double>(d2));
        s.mass = at.mass * total;

        const double b_cap = 0.25 * L / s.radius;
        double plateau = at.mass;
        double plateau_radius = s.radius;
        if (b_cap >= 1.0) {
            for (double b = b_cap; b >= 1.0; b *= 0.5) {
                const double inner = ball_integral(density, s.center, b * s.radius);
                const double outer = ball_integral(density, s.center, 2.0 * b * s.radius);
                if (outer - inner < opts.plateau_increment * inner) {
                    plateau = inner;
                    plateau_radius = b * s.radius;
                    break;
                }
            }
        }
        s.plateau_radius = plateau_radius;
        s.plateau_mass = plateau * total;
        s.quantum_ratio = plateau * k / sphere_quantum;
        s.concentrated = s.radius <= opts.concentration_radius * L * (1.0 + 1e-12);
        const double nearest = std::max(1.0, std::round(s.quantum_ratio));
        s.quantized = s.concentrated && std::abs(s.quantum_ratio - nearest) <= opts.quantization_band;
        sites.push_back(s);

        zero_ball(density, s.center, opts.mask_factor * s.radius);
    }
    return sites;
}

Point RescaledSamples::z(std::size_t flat) const {
    Point out{};
    const auto m = static_cast<std::size_t>(points);
    for (int a = 3; a >= 0; --a) {
        out[static_cast<std::size_t>(a)] = -half_width + dz * static_cast<double>(flat % m);
        flat /= m;
    }
    return out;
}

RescaledSamples rescale(const ScalarField& u, const Point& center, double r, double half_width,
                        int points) {
    const TorusGrid& g = u.grid();
    if (!(r > 0.0 && half_width > 0.0)) throw InvalidArgument("rescale: need r > 0 and half_width > 0");
    if (points < 2) throw InvalidArgument("rescale: need at least 2 points per axis");
    if (r * half_width > 0.25 * g.period() * (1.0 + 1e-12))
        throw InvalidArgument("rescale: window r * half_width exceeds L/4");

    const int n = g.n();
    const auto N = static_cast<std::size_t>(n);
    const auto m = static_cast<std::size_t>(points);
    RescaledSamples out;
    out.center = center;
    out.r = r;
    out.half_width = half_width;
    out.points = points;
    out.dz = 2.0 * half_width / (points - 1);

    // Periodic interpolation weights per axis: the Dirichlet kernel of the
    // retained modes, with the Nyquist mode as a cosine.
    std::array<std::vector<double>, 4> w;
    for (int a = 0; a < 4; ++a) {
        w[a].assign(m * N, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            const double x = center[static_cast<std::size_t>(a)] + r * (-half_width + out.dz * double(j));
            for (std::size_t i = 0; i < N; ++i) {
                const double theta = 2.0 * pi * (x - g.spacing() * double(i)) / g.period();
                double s = 1.0 + std::cos(0.5 * n * theta);
                for (int q = 1; q < n / 2; ++q) s += 2.0 * std::cos(q * theta);
                w[a][j * N + i] = s / n;
            }
        }
    }
    // Contract the trailing axis repeatedly; data layout [rest][axis] -> [axis'][rest].
    std::vector<double> data(u.values().begin(), u.values().end());
    std::size_t rest = N * N * N;
    for (int a = 3; a >= 0; --a) {
        std::vector<double> next(m * rest * (data.size() / (rest * N)), 0.0);
        const std::size_t tail = data.size() / (rest * N);  // already-contracted block
        // data: [rest][N][tail] -> next: [rest][m][tail]
        for (std::size_t o = 0; o < rest; ++o)
            for (std::size_t j = 0; j < m; ++j) {
                double* dst = &next[(o * m + j) * tail];
                for (std::size_t i = 0; i < N; ++i) {
                    const double c = w[static_cast<std::size_t>(a)][j * N + i];
                    const double* src = &data[(o * N + i) * tail];
                    for (std::size_t t = 0; t < tail; ++t) dst[t] += c * src[t];
                }
            }
        data.swap(next);
        rest /= N;
    }
    const double shift = std::log(r);
    for (double& v : data) v += shift;
    out.values = std::move(data);
    return out;
}

BubbleFit bubble_fit(const RescaledSamples& s, double k) {
    if (!(k > 0.0)) throw InvalidArgument("bubble_fit: k must be positive");
    const double fit_radius = 0.5 * s.half_width;
    std::vector<Point> zs;
    std::vector<double> vs;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        if (!std::isfinite(s.values[i])) throw InvalidArgument("bubble_fit: samples must be finite");
        const Point z = s.z(i);
        double r2 = 0.0;
        for (double c : z) r2 += c * c;
        if (r2 <= fit_radius * fit_radius * (1.0 + 1e-12)) {
            zs.push_back(z);
            vs.push_back(s.values[i]);
        }
    }
    if (zs.size() < 6) throw InvalidArgument("bubble_fit: too few samples in the fit ball");

    std::size_t top = 0;
    for (std::size_t i = 1; i < vs.size(); ++i)
        if (vs[i] > vs[top]) top = i;
    const double log_k6 = 0.25 * std::log(k / 6.0);

    // theta = (z0, log lambda)
    Eigen::Matrix<double, 5, 1> theta;
    for (int a = 0; a < 4; ++a) theta(a) = zs[top][static_cast<std::size_t>(a)];
    theta(4) = std::log(0.5) + vs[top] + log_k6;

    const auto count = static_cast<Eigen::Index>(zs.size());
    auto residuals = [&](const Eigen::Matrix<double, 5, 1>& th, Eigen::VectorXd& r,
                         Eigen::Matrix<double, Eigen::Dynamic, 5>* jac) {
        const double lam = std::exp(th(4));
        const double lam2 = lam * lam;
        r.resize(count);
        if (jac) jac->resize(count, 5);
        for (Eigen::Index j = 0; j < count; ++j) {
            const Point& z = zs[static_cast<std::size_t>(j)];
            double rho2 = 0.0;
            for (int a = 0; a < 4; ++a) rho2 += (z[a] - th(a)) * (z[a] - th(a));
            const double q = 1.0 + lam2 * rho2;
            const double xi = std::log(2.0) + th(4) - std::log(q) - log_k6;
            r(j) = vs[static_cast<std::size_t>(j)] - xi;
            if (jac) {
                // d r / d theta = -d xi / d theta
                for (int a = 0; a < 4; ++a) (*jac)(j, a) = -2.0 * lam2 * (z[a] - th(a)) / q;
                (*jac)(j, 4) = -(1.0 - 2.0 * lam2 * rho2 / q);
            }
        }
    };

    Eigen::VectorXd r;
    Eigen::Matrix<double, Eigen::Dynamic, 5> J;
    residuals(theta, r, &J);
    double cost = r.squaredNorm();
    double mu = 1e-3;
    std::ostringstream trace;
    int it = 0;
    bool converged = false;
    for (; it < 200 && !converged; ++it) {
        const Eigen::Matrix<double, 5, 5> A = J.transpose() * J;
        const Eigen::Matrix<double, 5, 1> grad = J.transpose() * r;
        trace << "it " << it << " cost " << cost << " mu " << mu << "\n";
        bool improved = false;
        for (int tries = 0; tries < 40; ++tries) {
            Eigen::Matrix<double, 5, 5> M = A;
            for (int d = 0; d < 5; ++d) M(d, d) += mu * std::max(A(d, d), 1e-300);
            const Eigen::Matrix<double, 5, 1> step = M.ldlt().solve(-grad);
            const Eigen::Matrix<double, 5, 1> cand = theta + step;
            Eigen::VectorXd rc;
            residuals(cand, rc, nullptr);
            const double cc = rc.squaredNorm();
            if (std::isfinite(cc) && cc <= cost) {
                const double rel_step = step.norm() / (1.0 + theta.norm());
                const double rel_cost = (cost - cc) / std::max(cost, 1e-300);
                theta = cand;
                residuals(theta, r, &J);
                cost = cc;
                mu = std::max(mu / 3.0, 1e-12);
                improved = true;
                if (rel_step < 1e-12 || rel_cost < 1e-15 || cost < 1e-28) converged = true;
                break;
            }
            mu *= 4.0;
        }
        if (!improved) {
            // No decrease possible at any damping: a stationary point of the cost.
            converged = grad.norm() <= 1e-8 * (1.0 + std::sqrt(cost));
            if (!converged)
                throw NumericalError("fit", "Levenberg-Marquardt could not decrease the cost\n" +
                                                trace.str());
            break;
        }
    }
    if (!converged)
        throw NumericalError("fit", "Levenberg-Marquardt did not converge in 200 iterations\n" +
                                        trace.str());

    BubbleFit fit;
    for (int a = 0; a < 4; ++a) fit.z0_fit[static_cast<std::size_t>(a)] = theta(a);
    fit.lambda_fit = std::exp(theta(4));
    fit.fit_radius = fit_radius;
    fit.samples = zs.size();
    fit.iterations = it;
    fit.l2_error = std::sqrt(cost / static_cast<double>(zs.size()));
    fit.sup_error = r.cwiseAbs().maxCoeff();
    if (fit.lambda_fit * fit_radius < 1.0) {
        std::ostringstream msg;
        msg << "fitted bubble is wider than the window (lambda = " << fit.lambda_fit
            << ", fit radius = " << fit_radius << ", l2 error = " << fit.l2_error << ")";
        throw NumericalError("fit", msg.str());
    }
    return fit;
}

QuantizationReport quantization_report(const ScalarField& u, double k,
                                       const DetectionOptions& opts) {
    QuantizationReport rep;
    rep.sites = detect_concentration(u, k, opts.rho > 0.0 ? opts.rho : default_rho(k), opts);
    rep.total_volume = std::exp(log_conformal_volume(u));
    ScalarField density = detail::normalized_density(u);
    for (const auto& s : rep.sites) {
        rep.site_fraction += s.plateau_mass / rep.total_volume;
        if (s.concentrated) rep.quantum_sum += s.quantum_ratio;
        zero_ball(density, s.center, s.plateau_radius);
    }
    rep.unmasked_fraction = integrate(density);
    rep.accounting_error = std::abs(rep.site_fraction + rep.unmasked_fraction - 1.0);
    return rep;
}

bool HarnackMeasurement::holds(double slack) const {
    if (R == r) return std::log(mass_R / mass_r) <= slack;
    return measured_exponent <= -bound_exponent + slack;
}

HarnackMeasurement harnack_measure(const ScalarField& u, const ProblemData& p, const Point& x,
                                   const Point& y, double r, double R) {
    const TorusGrid& g = u.grid();
    if (!(r > 0.0 && r <= R && R <= 0.5 * g.period() * (1.0 + 1e-12)))
        throw InvalidArgument("harnack_measure: need 0 < r <= R <= L/2");
    if (!(p.k > 0.0)) throw InvalidArgument("harnack_measure: k must be positive");
    const double lv = log_conformal_volume(u);
    if (lv > 709.0) throw NumericalError("overflow", "harnack_measure: e^{4u} overflows");
    ScalarField density(g);
    for (std::size_t i = 0; i < density.size(); ++i) density[i] = std::exp(4.0 * u[i]);

    HarnackMeasurement m;
    m.x = x;
    m.y = y;
    m.r = r;
    m.R = R;
    m.separation = g.distance(x, y) / R;
    m.mass_r = ball_integral(density, x, r);
    if (!(m.mass_r > 0.0)) throw NumericalError("zero_mass", "harnack_measure: B_r(x) has zero mass");
    m.mass_R = ball_integral(density, y, R);
    m.h_mass_r = p.k * m.mass_r;
    m.h_mass_2R = p.k * ball_or_total(density, y, 2.0 * R);
    m.hypothesis_ok = m.h_mass_2R <= pi * pi;
    m.measured_exponent = R > r ? std::log(m.mass_R / m.mass_r) / std::log(R / r) : 0.0;
    m.bound_exponent = -4.0 + m.h_mass_r / (2.0 * pi * pi);
    return m;
}

}  // namespace qflow
