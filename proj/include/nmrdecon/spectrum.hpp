#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace nmrdecon {

/// Regularly spaced chemical-shift axis in ppm, ascending.
struct ChemicalShiftGrid {
    std::vector<double> points;
    double spectrometer_frequency_mhz = 600.0;

    // Relative spacing deviation accepted before a grid is rejected as irregular.
    static constexpr double kRegularityTol = 1e-6;

    std::size_t size() const { return points.size(); }
    double lo() const { return points.front(); }
    double hi() const { return points.back(); }
    double spacing() const { return points[1] - points[0]; }

    /// Throws DataError unless points are strictly increasing with uniform spacing.
    void validate() const;
};

struct Spectrum {
    ChemicalShiftGrid grid;
    std::vector<double> intensities;

    std::size_t size() const { return intensities.size(); }
};

/// Biological replicates assumed to share metabolite concentrations.
struct SpectrumSet {
    std::vector<Spectrum> spectra;
};

/// Reads a two-column text spectrum (ppm, intensity; comma or whitespace separated,
/// '#' comments and an optional header line allowed). Points are sorted ascending.
Spectrum load_spectrum(const std::string& path, double spectrometer_frequency_mhz);

/// Divides intensities by their sum so they add to one. Negative values pass through.
Spectrum standardize(const Spectrum& s);

/// Keeps the grid points inside [lo, hi]; intensities are not re-standardized.
Spectrum restrict_region(const Spectrum& s, double lo, double hi);

void write_spectrum(const Spectrum& s, const std::string& path);

} // namespace nmrdecon
