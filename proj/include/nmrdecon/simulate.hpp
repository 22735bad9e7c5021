#pragma once

#include "nmrdecon/catalog.hpp"
#include "nmrdecon/spectrum.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace nmrdecon {

struct SimulationConfig {
    double grid_lo = 0.0;
    double grid_hi = 5.0;
    int n = 2048;
    double frequency_mhz = 600.0;

    double conc_lo = 0.0, conc_hi = 1.0;      // concentrations drawn uniformly
    double shift_perturbation_ppm = 0.03;     // multiplet shifts drawn U[-x, x] around the estimate
    double hump_fraction = 1.0;               // hump mass as a fraction of the parametric mass
    double hump_sd_ppm = 5.8;
    double noise_sd = 0.3;                    // additive Gaussian noise, pre-standardization units
    double gamma_ppm = -1.0;                  // peak-width; < 0 means 1 Hz / F
    double width_jitter_sd = 0.0;             // log-normal sd of per-metabolite width multipliers
    std::uint64_t seed = 1;
};

struct GroundTruth {
    std::vector<std::string> names;
    std::vector<double> concentrations; // pre-standardization
    std::vector<double> true_shifts;    // flattened in catalog (metabolite, multiplet) order
    std::vector<double> width_multipliers;
    double gamma_ppm = 0;
    double hump_mean_ppm = 0;
    double hump_sd_ppm = 0;
    double hump_amplitude = 0;
    double noise_sd = 0;
    double standardization_factor = 1; // sum of the raw intensities

    void save(const std::string& path) const;
    static GroundTruth load(const std::string& path);
};

/// Draws a synthetic spectrum from the catalog templates: concentrations,
/// perturbed shifts, a broad Gaussian hump and iid noise, then standardizes.
/// The truth is recorded on the pre-standardization scale together with the
/// standardization factor.
std::pair<Spectrum, GroundTruth> simulate(const SignatureCatalog& catalog,
                                          const SimulationConfig& config);

} // namespace nmrdecon
