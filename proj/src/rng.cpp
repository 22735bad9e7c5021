#include "nmrdecon/rng.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace nmrdecon {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

// Stable for very negative x via the scaled complementary error function
// asymptotics.
double log_norm_cdf(double x) {
    const double z = -x * std::numbers::sqrt2 / 2.0; // erfc argument
    if (z < 25.0) {
        return std::log(0.5 * std::erfc(z));
    }
    // erfc(z) = exp(-z^2)/(z sqrt(pi)) * (1 - 1/(2z^2) + 3/(4z^4) - ...)
    const double zz = z * z;
    const double series = 1.0 - 0.5 / zz + 0.75 / (zz * zz);
    return -zz - std::log(z * std::sqrt(std::numbers::pi)) + std::log(series) - std::numbers::ln2;
}

double norm_quantile(double u) {
    if (!(u > 0.0) || !(u < 1.0)) {
        if (u == 0.0) return -kInf;
        if (u == 1.0) return kInf;
        throw std::invalid_argument("norm_quantile: argument outside [0, 1]");
    }
    // Phi^{-1}(u) = -sqrt(2) erfc^{-1}(2u)
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
}

double log_norm_cdf_diff(double a, double b) {
    if (!(a < b)) return -kInf;
    if (a == -kInf && b == kInf) return 0.0;
    if (a == -kInf) return log_norm_cdf(b);
    if (b == kInf) return log_norm_cdf(-a);
    // work in the lower tail where log Phi is the stable quantity
    if (a > 0.0) return log_norm_cdf_diff(-b, -a);
    const double la = log_norm_cdf(a);
    const double lb = log_norm_cdf(b);
    // log(e^lb - e^la)
    return lb + std::log1p(-std::exp(la - lb));
}

double truncated_normal_logpdf(double x, double mean, double sd, double lo, double hi) {
    if (x < lo || x > hi) return -kInf;
    const double z = (x - mean) / sd;
    const double logz = log_norm_cdf_diff((lo - mean) / sd, (hi - mean) / sd);
    return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi) - logz;
}

double truncated_cauchy_logpdf(double x, double center, double scale, double lo, double hi) {
    if (x < lo || x > hi) return -kInf;
    const double flo = std::atan((lo - center) / scale) / std::numbers::pi + 0.5;
    const double fhi = std::atan((hi - center) / scale) / std::numbers::pi + 0.5;
    const double z = (x - center) / scale;
    return -std::log(std::numbers::pi * scale * (1.0 + z * z)) - std::log(fhi - flo);
}

double gamma_logpdf(double x, double shape, double rate) {
    if (!(x > 0)) return -kInf;
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

RngStream RngStream::derive(std::uint64_t master, std::uint64_t stream, std::uint64_t substream) {
    std::uint64_t s = splitmix64(master);
    s = splitmix64(s ^ splitmix64(stream + 0x517cc1b727220a95ULL));
    s = splitmix64(s ^ splitmix64(substream + 0x2545f4914f6cdd1dULL));
    return RngStream(s);
}

int RngStream::uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % static_cast<std::uint64_t>(n);
    std::uint64_t x;
    do {
        x = gen_();
    } while (x >= limit);
    return static_cast<int>(x % static_cast<std::uint64_t>(n));
}

double RngStream::gamma(double shape, double rate) {
    if (!(shape > 0) || !(rate > 0)) {
        throw std::invalid_argument("gamma: shape and rate must be positive");
    }
    if (shape < 1.0) {
        // boost the shape and correct with a power of a uniform
        const double g = gamma(shape + 1.0, rate);
        return g * std::pow(uniform(), 1.0 / shape);
    }
    // Marsaglia-Tsang squeeze
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
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
}

namespace {

// Robert's exponential-rejection sampler for a standard normal restricted to
// [a, b] with a > 0.
double right_tail_normal(RngStream& rng, double a, double b) {
    const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (int iter = 0; iter < 100000; ++iter) {
        const double z = a - std::log(rng.uniform()) / alpha;
        if (z <= b) {
            const double w = z - alpha;
            if (std::log(rng.uniform()) <= -0.5 * w * w) return z;
        }
    }
    // pathological interval; the density is monotone here, return near the boundary
    return std::min(b, a + 1e-8);
}

} // namespace

double RngStream::truncated_normal(double mean, double sd, double lo, double hi) {
    if (!(sd > 0)) throw std::invalid_argument("truncated_normal: sd must be positive");
    if (!(lo < hi)) throw std::invalid_argument("truncated_normal: empty interval");
    const double a = (lo - mean) / sd;
    const double b = (hi - mean) / sd;
    double z;
    if (a > 5.0) {
        z = right_tail_normal(*this, a, b);
    } else if (b < -5.0) {
        z = -right_tail_normal(*this, -b, -a);
    } else {
        const double fa = (a == -kInf) ? 0.0 : norm_cdf(a);
        const double fb = (b == kInf) ? 1.0 : norm_cdf(b);
        const double u = fa + uniform() * (fb - fa);
        z = norm_quantile(u);
    }
    return std::min(std::max(mean + sd * z, lo), hi);
}

} // namespace nmrdecon
