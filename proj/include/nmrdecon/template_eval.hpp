#pragma once

#include "nmrdecon/catalog.hpp"
#include "nmrdecon/spectrum.hpp"

#include <span>
#include <vector>

namespace nmrdecon {

// Peak contributions are dropped beyond this many peak-widths from the center;
// the neglected tail mass is about 1/(100*pi) of a peak on each side.
inline constexpr double kPeakWindowHalfwidths = 200.0;

/// Zero-centered standardized Lorentzian with full width at half maximum `gamma`.
double lorentzian(double gamma, double x);

/// Its cumulative distribution function (a Cauchy CDF with scale gamma/2).
double lorentzian_cdf(double gamma, double x);

/// d lorentzian / dx, used by continuity checks.
double lorentzian_dx(double gamma, double x);

/// Multiplet curve value: weighted Lorentzians at delta_star + peak offsets.
double multiplet_curve(const Multiplet& m, double gamma, double delta_star, double x);

double multiplet_curve_cdf(const Multiplet& m, double gamma, double delta_star, double x);

/// Adds weight_z times the multiplet curve to `col`, evaluated on the grid,
/// windowed to +-kPeakWindowHalfwidths*gamma around each peak.
void add_multiplet_to_column(std::span<double> col, const ChemicalShiftGrid& grid,
                             const Multiplet& m, double weight_z, double gamma,
                             double delta_star);

/// One metabolite's template sampled on the grid: sum_u z_u * g_u(x - shift_u).
std::vector<double> evaluate_template(const MetaboliteTemplate& t, double gamma,
                                      std::span<const double> shifts,
                                      const ChemicalShiftGrid& grid);

/// n x M evaluation of a catalog, with the generating parameters recorded.
struct TemplateMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values; // column major
    double gamma = 0;
    std::vector<double> shifts;            // flattened per-multiplet shifts
    std::vector<double> log_width_offsets; // per metabolite (empty means zeros)

    double at(std::size_t i, std::size_t m) const { return values[m * rows + i]; }
    std::span<const double> column(std::size_t m) const {
        return {values.data() + m * rows, rows};
    }
};

/// Column m uses effective peak-width gamma * exp(log_width_offsets[m]).
/// `shifts` holds one entry per multiplet, metabolites in catalog order.
TemplateMatrix build_template_matrix(const SignatureCatalog& c, double gamma,
                                     std::span<const double> shifts,
                                     std::span<const double> log_width_offsets,
                                     const ChemicalShiftGrid& grid);

/// Serial reference for the OpenMP build; results are bit-identical.
TemplateMatrix build_template_matrix_serial(const SignatureCatalog& c, double gamma,
                                            std::span<const double> shifts,
                                            std::span<const double> log_width_offsets,
                                            const ChemicalShiftGrid& grid);

} // namespace nmrdecon
