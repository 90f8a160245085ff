#include "qflow/operators.hpp"

#include <cmath>
#include <sstream>

#include "qflow/error.hpp"

namespace qflow {

SpectralField apply_paneitz(const SpectralField& u) {
    SpectralField out = u;
    const TorusGrid& g = u.grid();
    for_each_mode(g, [&](std::size_t i, int m1, int m2, int m3, int m4, double) {
        const double k2 = wave_norm2(g, m1, m2, m3, m4);
        out[i] *= k2 * k2;
    });
    return out;
}

ScalarField apply_paneitz(const ScalarField& u) {
    return inverse_transform(apply_paneitz(forward_transform(u)));
}

ScalarField solve_paneitz(const ScalarField& rhs, double mean_value) {
    const TorusGrid& g = rhs.grid();
    const double total = integrate(rhs);
    const double scale = std::max(std::abs(rhs.max()), std::abs(rhs.min()));
    if (std::abs(total) > 1e-8 * (1.0 + scale) * g.volume()) {
        std::ostringstream msg;
        msg << "solve_paneitz: right-hand side must have zero mean, got mean "
            << total / g.volume();
        throw InvalidArgument(msg.str());
    }
    SpectralField spec = forward_transform(rhs);
    for_each_mode(g, [&](std::size_t i, int m1, int m2, int m3, int m4, double) {
        const double k2 = wave_norm2(g, m1, m2, m3, m4);
        spec[i] = (i == 0) ? std::complex<double>(mean_value, 0.0) : spec[i] / (k2 * k2);
    });
    return inverse_transform(spec);
}

GreenFieldSample green_field(const TorusGrid& grid, const Point& source) {
    for (double s : source)
        if (!(s >= 0.0 && s < grid.period()))
            throw InvalidArgument("green_field: source must lie in [0, L)^4");
    const int n = grid.n();

    // Per-axis phase of the band-limited delta.
    std::array<std::vector<std::complex<double>>, 4> phase;
    for (int a = 0; a < 4; ++a) {
        phase[a].resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const int m = grid.signed_mode(i);
            const double arg = grid.wavenumber(m) * source[a];
            phase[a][i] = (m == -n / 2) ? std::complex<double>(std::cos(arg), 0.0)
                                        : std::polar(1.0, -arg);
        }
    }
    SpectralField spec(grid);
    const double inv_volume = 1.0 / grid.volume();
    for_each_mode(grid, [&](std::size_t i, int m1, int m2, int m3, int m4, double) {
        if (i == 0) return;
        const double k2 = wave_norm2(grid, m1, m2, m3, m4);
        const auto idx = [n](int m) { return static_cast<std::size_t>((m + n) % n); };
        // Axis 4 stores m4 = n/2 where the signed convention says -n/2.
        const std::complex<double> p4 =
            (m4 == n / 2) ? phase[3][static_cast<std::size_t>(n / 2)] : phase[3][idx(m4)];
        spec[i] = inv_volume * phase[0][idx(m1)] * phase[1][idx(m2)] * phase[2][idx(m3)] * p4 /
                  (k2 * k2);
    });
    GreenFieldSample out{source, inverse_transform(spec), 0.0};
    out.mean = integrate(out.field) / grid.volume();
    return out;
}

std::vector<RadialSample> green_annulus_samples(const TorusGrid& grid, double r_min,
                                                double r_max) {
    if (!(r_min >= 0.0 && r_min < r_max && r_max <= 0.25 * grid.period() * (1.0 + 1e-12)))
        throw InvalidArgument("green_annulus_samples: need 0 <= r_min < r_max <= L/4");
    const int n = grid.n();
    const int modes = n / 2 + 1;
    const double h = grid.spacing();
    const int points = static_cast<int>(std::floor(r_max / h * (1.0 + 1e-12))) + 1;
    const auto M = static_cast<std::size_t>(modes);
    const auto X = static_cast<std::size_t>(points);

    // cos table with the multiplicity of +-m folded in.
    std::vector<double> cosine(M * X);
    for (int m = 0; m < modes; ++m) {
        const double w = (m == 0 || m == n / 2) ? 1.0 : 2.0;
        for (int j = 0; j < points; ++j)
            cosine[static_cast<std::size_t>(m) * X + static_cast<std::size_t>(j)] =
                w * std::cos(2.0 * std::numbers::pi * m * j / n);
    }
    const double k = 2.0 * std::numbers::pi / grid.period();
    const double k4 = k * k * k * k;

    // Contract one axis at a time: modes (a,b,c,d) -> (a,b,c,x4) -> ... -> (x1,x2,x3,x4).
    std::vector<double> stage(M * M * M * X, 0.0);
    for (std::size_t a = 0; a < M; ++a)
        for (std::size_t b = 0; b < M; ++b)
            for (std::size_t c = 0; c < M; ++c) {
                double* out = &stage[((a * M + b) * M + c) * X];
                for (std::size_t d = 0; d < M; ++d) {
                    const double m2 = double(a * a + b * b + c * c + d * d);
                    if (m2 == 0.0) continue;
                    const double w = 1.0 / (k4 * m2 * m2);
                    const double* cs = &cosine[d * X];
                    for (std::size_t x = 0; x < X; ++x) out[x] += w * cs[x];
                }
            }
    auto contract = [&](const std::vector<double>& in, std::size_t outer, std::size_t inner) {
        // in: [outer][M][inner] -> out: [outer][X][inner]
        std::vector<double> out(outer * X * inner, 0.0);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t m = 0; m < M; ++m) {
                const double* src = &in[(o * M + m) * inner];
                for (std::size_t x = 0; x < X; ++x) {
                    const double c = cosine[m * X + x];
                    double* dst = &out[(o * X + x) * inner];
                    for (std::size_t t = 0; t < inner; ++t) dst[t] += c * src[t];
                }
            }
        return out;
    };
    stage = contract(stage, M * M, X);      // [a][b][x3][x4]
    stage = contract(stage, M, X * X);      // [a][x2][x3][x4]
    stage = contract(stage, 1, X * X * X);  // [x1][x2][x3][x4]

    const double inv_volume = 1.0 / grid.volume();
    std::vector<RadialSample> samples;
    const double lo2 = r_min * r_min * (1.0 - 1e-12);
    const double hi2 = r_max * r_max * (1.0 + 1e-12);
    for (std::size_t j1 = 0; j1 < X; ++j1)
        for (std::size_t j2 = 0; j2 < X; ++j2)
            for (std::size_t j3 = 0; j3 < X; ++j3)
                for (std::size_t j4 = 0; j4 < X; ++j4) {
                    const double r2 = h * h * double(j1 * j1 + j2 * j2 + j3 * j3 + j4 * j4);
                    if (r2 < lo2 || r2 > hi2) continue;
                    double mult = 1.0;
                    for (std::size_t j : {j1, j2, j3, j4}) mult *= (j == 0) ? 1.0 : 2.0;
                    samples.push_back({std::sqrt(r2),
                                       inv_volume * stage[((j1 * X + j2) * X + j3) * X + j4],
                                       mult});
                }
    return samples;
}

LogFit fit_log_profile(std::span<const RadialSample> samples, double r_min, double r_max) {
    std::vector<RadialSample> in;
    for (const auto& s : samples)
        if (s.r >= r_min * (1.0 - 1e-12) && s.r <= r_max * (1.0 + 1e-12) && s.r > 0.0)
            in.push_back(s);
    const double total = pairwise_reduce(in.size(), [&](std::size_t i) { return in[i].weight; });
    if (total < 32.0)
        throw InvalidArgument("log fit: only " + std::to_string(static_cast<long>(total)) +
                              " points in the annulus, need at least 32");

    const double mean_x =
        pairwise_reduce(in.size(), [&](std::size_t i) { return in[i].weight * std::log(in[i].r); }) /
        total;
    const double mean_y =
        pairwise_reduce(in.size(), [&](std::size_t i) { return in[i].weight * in[i].value; }) / total;
    const double sxx = pairwise_reduce(in.size(), [&](std::size_t i) {
        const double dx = std::log(in[i].r) - mean_x;
        return in[i].weight * dx * dx;
    });
    const double sxy = pairwise_reduce(in.size(), [&](std::size_t i) {
        return in[i].weight * (std::log(in[i].r) - mean_x) * (in[i].value - mean_y);
    });
    LogFit fit;
    fit.r_min = r_min;
    fit.r_max = r_max;
    fit.points = total;
    fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    fit.regular_estimate = mean_y - fit.slope * mean_x;
    const double sse = pairwise_reduce(in.size(), [&](std::size_t i) {
        const double e = in[i].value - fit.slope * std::log(in[i].r) - fit.regular_estimate;
        return in[i].weight * e * e;
    });
    fit.residual = std::sqrt(sse / total);
    return fit;
}

LogFit green_log_fit(const GreenFieldSample& sample, double r_min, double r_max) {
    const TorusGrid& g = sample.field.grid();
    const double h = g.spacing();
    if (!(r_min >= 4.0 * h * (1.0 - 1e-12) && r_min < r_max &&
          r_max <= 0.25 * g.period() * (1.0 + 1e-12)))
        throw InvalidArgument("green_log_fit: need 4*spacing <= r_min < r_max <= L/4");
    std::vector<RadialSample> samples;
    for (std::size_t i = 0; i < sample.field.size(); ++i) {
        const double r = g.distance(g.coordinates(i), sample.source);
        if (r >= r_min * (1.0 - 1e-12) && r <= r_max * (1.0 + 1e-12))
            samples.push_back({r, sample.field[i], 1.0});
    }
    return fit_log_profile(samples, r_min, r_max);
}

LogFit green_log_fit(const GreenFieldSample& sample) {
    const TorusGrid& g = sample.field.grid();
    return green_log_fit(sample, 6.0 * g.spacing(), g.period() / 8.0);
}

}  // namespace qflow
