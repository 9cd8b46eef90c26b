#pragma once

#include "softer/error.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace softer {

/// Seeded random stream. All variates are generated here from the raw 64-bit
/// engine output, so a chain is reproducible from (seed, stream) and its state
/// can be checkpointed as a string.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream),
                          static_cast<std::uint32_t>(stream >> 32), 0x50f7e4u};
        engine_.seed(seq);
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    // Marsaglia polar method; the second variate is discarded so no hidden
    // state lives outside the engine.
    double normal() {
        double x, z;
        do {
            x = 2.0 * uniform() - 1.0;
            const double y = 2.0 * uniform() - 1.0;
            z = x * x + y * y;
        } while (z >= 1.0);
        return x * std::sqrt(-2.0 * std::log(z) / z);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Gamma(shape, rate), Marsaglia-Tsang with the shape < 1 boost.
    double gamma(double shape, double rate) {
        if (!(shape > 0.0) || !(rate > 0.0))
            throw NumericError("gamma variate needs positive shape and rate");
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0, rate);
            return g * std::exp(std::log(uniform()) / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * (x * x) * (x * x)) return d * v / rate;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
        }
    }

    // InvGamma(shape, scale): 1 / Gamma(shape, rate = scale).
    double inv_gamma(double shape, double scale) { return 1.0 / gamma(shape, scale); }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void restore(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        if (!is) throw IoError("malformed random-engine state");
    }

    bool operator==(const RngStream& o) const {
        return seed_ == o.seed_ && stream_ == o.stream_ && engine_ == o.engine_;
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
};

/// Generalized inverse Gaussian: density ∝ x^(p-1) exp{-(a x + b / x) / 2}.
struct GigParams {
    double p = 0.0;
    double a = 0.0;
    double b = 0.0;

    void validate() const {
        if (!std::isfinite(p) || !std::isfinite(a) || !std::isfinite(b) || a < 0.0 || b < 0.0)
            throw NumericError("giG parameters must be finite with a, b >= 0");
        if (a == 0.0 && b == 0.0) throw NumericError("giG with a = b = 0 is improper");
        if (a == 0.0 && !(p < 0.0)) throw NumericError("giG with a = 0 needs p < 0");
        if (b == 0.0 && !(p > 0.0)) throw NumericError("giG with b = 0 needs p > 0");
    }

    // Unnormalized log density.
    double log_kernel(double x) const {
        return (p - 1.0) * std::log(x) - 0.5 * (a * x + b / x);
    }
};

namespace detail {

// Mode of the standardized density x^(λ-1) exp{-ω(x + 1/x)/2}.
inline double gig_mode(double lambda, double omega) {
    if (lambda >= 1.0)
        return (std::sqrt((lambda - 1.0) * (lambda - 1.0) + omega * omega) + (lambda - 1.0)) / omega;
    return omega / (std::sqrt((1.0 - lambda) * (1.0 - lambda) + omega * omega) + (1.0 - lambda));
}

// Ratio-of-uniforms without mode shift (Hörmann & Leydold 2014, case
// λ ≥ 1 - 2.25 ω² or ω > 0.2 with λ ≤ 2, ω ≤ 3).
inline double gig_rou_noshift(double lambda, double omega, RngStream& rng) {
    const double t = 0.5 * (lambda - 1.0);
    const double s = 0.25 * omega;
    const double xm = gig_mode(lambda, omega);
    const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);
    const double ym = ((lambda + 1.0) + std::sqrt((lambda + 1.0) * (lambda + 1.0) + omega * omega)) / omega;
    const double um = std::exp(0.5 * (lambda + 1.0) * std::log(ym) - s * (ym + 1.0 / ym) - nc);
    for (;;) {
        const double u = um * rng.uniform();
        const double v = rng.uniform();
        const double x = u / v;
        if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
    }
}

// Ratio-of-uniforms with mode shift, for λ > 2 or ω > 3.
inline double gig_rou_shift(double lambda, double omega, RngStream& rng) {
    const double t = 0.5 * (lambda - 1.0);
    const double s = 0.25 * omega;
    const double xm = gig_mode(lambda, omega);
    const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);

    // Roots of the cubic locating the bounding rectangle.
    const double a = -(2.0 * (lambda + 1.0) / omega + xm);
    const double b = (2.0 * (lambda - 1.0) * xm / omega - 1.0);
    const double c = xm;
    const double p = b - a * a / 3.0;
    const double q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c;
    const double fi = std::acos(-q / (2.0 * std::sqrt(-(p * p * p) / 27.0)));
    const double fak = 2.0 * std::sqrt(-p / 3.0);
    const double y1 = fak * std::cos(fi / 3.0) - a / 3.0;
    const double y2 = fak * std::cos(fi / 3.0 + 4.0 / 3.0 * std::numbers::pi) - a / 3.0;
    const double uplus = (y1 - xm) * std::exp(t * std::log(y1) - s * (y1 + 1.0 / y1) - nc);
    const double uminus = (y2 - xm) * std::exp(t * std::log(y2) - s * (y2 + 1.0 / y2) - nc);
    for (;;) {
        const double u = uminus + rng.uniform() * (uplus - uminus);
        const double v = rng.uniform();
        const double x = u / v + xm;
        if (x > 0.0 && std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
    }
}

// Rejection from a piecewise hat for the non-log-concave region
// 0 ≤ λ < 1, ω ≤ 0.2.
inline double gig_concave_free(double lambda, double omega, RngStream& rng) {
    const double xm = gig_mode(lambda, omega);
    const double x0 = omega / (1.0 - lambda);
    const double k0 = std::exp((lambda - 1.0) * std::log(xm) - 0.5 * omega * (xm + 1.0 / xm));
    double A[3];
    double k1, k2;
    A[0] = k0 * x0;
    if (x0 >= 2.0 / omega) {
        k1 = 0.0;
        A[1] = 0.0;
        k2 = std::pow(x0, lambda - 1.0);
        A[2] = k2 * 2.0 * std::exp(-omega * x0 / 2.0) / omega;
    } else {
        k1 = std::exp(-omega);
        A[1] = (lambda == 0.0) ? k1 * std::log(2.0 / (omega * omega))
                               : k1 / lambda * (std::pow(2.0 / omega, lambda) - std::pow(x0, lambda));
        k2 = std::pow(2.0 / omega, lambda - 1.0);
        A[2] = k2 * 2.0 * std::exp(-1.0) / omega;
    }
    const double total = A[0] + A[1] + A[2];
    for (;;) {
        double v = total * rng.uniform();
        double x, hx;
        if (v <= A[0]) {
            x = x0 * v / A[0];
            hx = k0;
        } else if ((v -= A[0]) <= A[1]) {
            if (lambda == 0.0) {
                x = omega * std::exp(std::exp(omega) * v);
                hx = k1 / x;
            } else {
                x = std::pow(std::pow(x0, lambda) + (lambda / k1 * v), 1.0 / lambda);
                hx = k1 * std::pow(x, lambda - 1.0);
            }
        } else {
            v -= A[1];
            const double lo = (x0 > 2.0 / omega) ? x0 : 2.0 / omega;
            x = -2.0 / omega * std::log(std::exp(-omega / 2.0 * lo) - omega / (2.0 * k2) * v);
            hx = k2 * std::exp(-omega / 2.0 * x);
        }
        const double u = rng.uniform() * hx;
        if (std::log(u) <= (lambda - 1.0) * std::log(x) - omega / 2.0 * (x + 1.0 / x)) return x;
    }
}

} // namespace detail

/// One exact draw from giG(p, a, b). The b = 0 and a = 0 limits reduce to
/// Gamma(p, a/2) and InvGamma(-p, b/2).
inline double sample_gig(const GigParams& g, RngStream& rng) {
    g.validate();
    if (g.b == 0.0) return rng.gamma(g.p, 0.5 * g.a);
    if (g.a == 0.0) return rng.inv_gamma(-g.p, 0.5 * g.b);

    const double lambda = std::abs(g.p);
    const double omega = std::sqrt(g.a * g.b);
    const double alpha = std::sqrt(g.b / g.a);
    double x;
    if (omega < 1e-100 && lambda > 0.0) {
        // The other side of the density is negligible: pure (inverse) gamma.
        return g.p > 0.0 ? rng.gamma(g.p, 0.5 * g.a) : rng.inv_gamma(-g.p, 0.5 * g.b);
    }
    if (lambda > 2.0 || omega > 3.0)
        x = detail::gig_rou_shift(lambda, omega, rng);
    else if (lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2)
        x = detail::gig_rou_noshift(lambda, omega, rng);
    else
        x = detail::gig_concave_free(lambda, omega, rng);
    return g.p < 0.0 ? alpha / x : alpha * x;
}

} // namespace softer
