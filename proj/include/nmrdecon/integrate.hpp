#pragma once

#include "nmrdecon/catalog.hpp"
#include "nmrdecon/simulate.hpp"
#include "nmrdecon/spectrum.hpp"

#include <string>
#include <vector>

namespace nmrdecon {

/// Numerical-integration concentration estimate from one multiplet: the window
/// [L, R] covers the central 95% of the multiplet curve at the (known) true
/// shift, and the windowed intensity sum is normalized by the template mass so
/// an isolated unit-concentration multiplet integrates to one.
struct IntegrationResult {
    double estimate = 0;          // standardized-intensity scale
    double estimate_original = 0; // multiplied back by the standardization factor
    double raw_printed = 0;       // the literal (sum y)/(0.95 N (L-R)) value
    double window_lo = 0, window_hi = 0;
    int points = 0;
};

IntegrationResult integrate_multiplet(const Spectrum& spectrum, const Multiplet& multiplet,
                                      double true_shift, double gamma,
                                      double standardization_factor);

/// Per-metabolite estimates: proton-weighted mean of the per-multiplet estimates.
struct MetaboliteIntegration {
    std::string name;
    double estimate_original = 0;
    double estimate = 0;
    double raw_printed = 0;
};

std::vector<MetaboliteIntegration> integrate_catalog(const Spectrum& spectrum,
                                                     const SignatureCatalog& catalog,
                                                     const GroundTruth& truth);

} // namespace nmrdecon
