#pragma once

#include <cmath>
#include <optional>
#include <vector>

namespace nmrdecon {

/// Hyperparameters of the joint prior. Shrinkage levels are indexed by wavelet
/// band (0 = approximation, increasing toward the finest detail band); scalar
/// values broadcast across bands.
struct PriorConfig {
    double a = 1e-9; // global precision gamma shape
    double b = 1e-6; // global precision gamma rate numerator

    double c_shrink = 0.05; // per-level shrinkage shape
    double d_shrink = 1e-8; // per-level shrinkage rate numerator
    std::vector<double> c_levels; // optional per-band overrides
    std::vector<double> d_levels;

    double h = -0.002; // half-plane truncation threshold (standardized intensity)
    double r = 1e5;    // truncation penalty strength

    double e_abundance = 0.0;  // abundance prior mean
    double s_abundance = 1e-3; // abundance prior precision

    bool random_effects = false; // per-metabolite log peak-width offsets
    double re_sd = 0.02;

    // Optional global overrides of the per-multiplet shift prior settings.
    std::optional<double> shift_sd_override;
    std::optional<double> shift_halfwidth_override;

    // Peak-width prior: log-normal, median 1 Hz / F and variance 4.6 Hz^2 / F^2.
    static constexpr double kGammaPriorVarHz2 = 4.6;
    double gamma_log_location(double frequency_mhz) const {
        return std::log(1.0 / frequency_mhz);
    }
    static double gamma_log_scale2() {
        // solve (e^{s} - 1) e^{s} = 4.6 for s = sigma^2
        return std::log(0.5 * (1.0 + std::sqrt(1.0 + 4.0 * kGammaPriorVarHz2)));
    }

    double c_level(int level) const {
        if (!c_levels.empty()) {
            const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(level),
                                                        c_levels.size() - 1);
            return c_levels[i];
        }
        return c_shrink;
    }
    double d_level(int level) const {
        if (!d_levels.empty()) {
            const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(level),
                                                        d_levels.size() - 1);
            return d_levels[i];
        }
        return d_shrink;
    }

    void validate() const;
};

} // namespace nmrdecon
