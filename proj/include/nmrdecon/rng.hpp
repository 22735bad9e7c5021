#pragma once

#include <cstdint>
#include <random>

namespace nmrdecon {

// Distribution helpers shared by samplers and Hastings-ratio code.
double norm_cdf(double x);
/// log(Phi(x)), stable for very negative x.
double log_norm_cdf(double x);
double norm_quantile(double u);
/// log(Phi(b) - Phi(a)) for a < b, stable in the far tails.
double log_norm_cdf_diff(double a, double b);
/// Log density of TN(mean, sd^2, [lo, hi]) at x (normalized; -inf outside).
double truncated_normal_logpdf(double x, double mean, double sd, double lo, double hi);
/// Log density of a Cauchy(center, scale) truncated to [lo, hi] at x.
double truncated_cauchy_logpdf(double x, double center, double scale, double lo, double hi);
double gamma_logpdf(double x, double shape, double rate);

/// Deterministic random stream; chains and replicates derive independent streams
/// from a master seed so results do not depend on the worker count.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    static RngStream derive(std::uint64_t master, std::uint64_t stream, std::uint64_t substream = 0);

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform on (0, 1), never exactly 0 or 1.
    double uniform() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int n); // uniform on {0, ..., n-1}

    double normal() { return norm_quantile(uniform()); }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double gamma(double shape, double rate);

    /// Inverse-CDF sampling with an exponential-rejection fallback when the
    /// truncation interval sits more than ~5 standard deviations into a tail.
    double truncated_normal(double mean, double sd, double lo, double hi);

    double cauchy(double center, double scale) {
        return center + scale * std::tan(3.14159265358979323846 * (uniform() - 0.5));
    }

private:
    std::mt19937_64 gen_;
};

} // namespace nmrdecon
