#include "nmrdecon/integrate.hpp"
#include "nmrdecon/errors.hpp"
#include "nmrdecon/template_eval.hpp"

#include <algorithm>
#include <cmath>

namespace nmrdecon {

namespace {

// Solve multiplet_curve_cdf(x) = target by bisection.
double cdf_inverse(const Multiplet& m, double gamma, double shift, double target) {
    double span = 0;
    for (const Peak& p : m.peaks) span = std::max(span, std::abs(p.offset_ppm));
    double lo = shift - span - 1000.0 * gamma;
    double hi = shift + span + 1000.0 * gamma;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (multiplet_curve_cdf(m, gamma, shift, mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace

IntegrationResult integrate_multiplet(const Spectrum& spectrum, const Multiplet& multiplet,
                                      double true_shift, double gamma,
                                      double standardization_factor) {
    if (!(gamma > 0)) throw std::invalid_argument("integrate_multiplet: peak-width must be positive");
    IntegrationResult res;
    res.window_lo = cdf_inverse(multiplet, gamma, true_shift, 0.025);
    res.window_hi = cdf_inverse(multiplet, gamma, true_shift, 0.975);

    const auto& x = spectrum.grid.points;
    auto first = std::upper_bound(x.begin(), x.end(), res.window_lo);
    auto last = std::lower_bound(x.begin(), x.end(), res.window_hi);
    if (first >= last) {
        throw DataError("integration window does not contain any grid points");
    }
    double sum = 0;
    for (auto it = first; it != last; ++it) {
        sum += spectrum.intensities[static_cast<std::size_t>(it - x.begin())];
    }
    res.points = static_cast<int>(last - first);

    const double spacing = spectrum.grid.spacing();
    res.estimate = sum * spacing / (0.95 * multiplet.proton_count);
    res.estimate_original = res.estimate * standardization_factor;
    // the formula as printed, including its negative (L - R) factor
    res.raw_printed = sum / (0.95 * res.points * (res.window_lo - res.window_hi));
    return res;
}

std::vector<MetaboliteIntegration> integrate_catalog(const Spectrum& spectrum,
                                                     const SignatureCatalog& catalog,
                                                     const GroundTruth& truth) {
    std::size_t total_multiplets = 0;
    for (const auto& t : catalog.templates) total_multiplets += t.multiplets.size();
    if (truth.true_shifts.size() != total_multiplets ||
        truth.concentrations.size() != catalog.size()) {
        throw DataError("integration: truth file does not match the catalog layout");
    }
    std::vector<MetaboliteIntegration> out;
    std::size_t shift_idx = 0;
    for (std::size_t m = 0; m < catalog.size(); ++m) {
        const MetaboliteTemplate& t = catalog.templates[m];
        const double g_eff = truth.gamma_ppm * truth.width_multipliers[m];
        MetaboliteIntegration mi;
        mi.name = t.name;
        double z_total = 0;
        for (const Multiplet& mult : t.multiplets) {
            IntegrationResult r = integrate_multiplet(spectrum, mult, truth.true_shifts[shift_idx],
                                                      g_eff, truth.standardization_factor);
            mi.estimate += mult.proton_count * r.estimate;
            mi.estimate_original += mult.proton_count * r.estimate_original;
            mi.raw_printed += mult.proton_count * r.raw_printed;
            z_total += mult.proton_count;
            ++shift_idx;
        }
        mi.estimate /= z_total;
        mi.estimate_original /= z_total;
        mi.raw_printed /= z_total;
        out.push_back(std::move(mi));
    }
    return out;
}

} // namespace nmrdecon
