#include "nmrdecon/template_eval.hpp"
#include "nmrdecon/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nmrdecon {

double lorentzian(double gamma, double x) {
    if (!(gamma > 0)) {
        throw std::invalid_argument("lorentzian: peak-width must be positive");
    }
    return (2.0 / std::numbers::pi) * gamma / (4.0 * x * x + gamma * gamma);
}

double lorentzian_cdf(double gamma, double x) {
    if (!(gamma > 0)) {
        throw std::invalid_argument("lorentzian_cdf: peak-width must be positive");
    }
    return 0.5 + std::atan(2.0 * x / gamma) / std::numbers::pi;
}

double lorentzian_dx(double gamma, double x) {
    if (!(gamma > 0)) {
        throw std::invalid_argument("lorentzian_dx: peak-width must be positive");
    }
    const double q = 4.0 * x * x + gamma * gamma;
    return (2.0 / std::numbers::pi) * gamma * (-8.0 * x) / (q * q);
}

double multiplet_curve(const Multiplet& m, double gamma, double delta_star, double x) {
    double v = 0;
    for (const Peak& p : m.peaks) {
        v += p.weight * lorentzian(gamma, x - delta_star - p.offset_ppm);
    }
    return v;
}

double multiplet_curve_cdf(const Multiplet& m, double gamma, double delta_star, double x) {
    double v = 0;
    for (const Peak& p : m.peaks) {
        v += p.weight * lorentzian_cdf(gamma, x - delta_star - p.offset_ppm);
    }
    return v;
}

void add_multiplet_to_column(std::span<double> col, const ChemicalShiftGrid& grid,
                             const Multiplet& m, double weight_z, double gamma,
                             double delta_star) {
    if (!(gamma > 0)) {
        throw std::invalid_argument("add_multiplet_to_column: peak-width must be positive");
    }
    const double x0 = grid.points.front();
    const double dx = grid.spacing();
    const double window = kPeakWindowHalfwidths * gamma;
    const auto n = static_cast<std::ptrdiff_t>(col.size());
    const double amp = weight_z * (2.0 / std::numbers::pi) * gamma;
    for (const Peak& p : m.peaks) {
        const double center = delta_star + p.offset_ppm;
        auto lo = static_cast<std::ptrdiff_t>(std::ceil((center - window - x0) / dx));
        auto hi = static_cast<std::ptrdiff_t>(std::floor((center + window - x0) / dx));
        lo = std::max<std::ptrdiff_t>(lo, 0);
        hi = std::min<std::ptrdiff_t>(hi, n - 1);
        const double wamp = amp * p.weight;
        for (std::ptrdiff_t i = lo; i <= hi; ++i) {
            const double d = grid.points[static_cast<std::size_t>(i)] - center;
            col[static_cast<std::size_t>(i)] += wamp / (4.0 * d * d + gamma * gamma);
        }
    }
}

std::vector<double> evaluate_template(const MetaboliteTemplate& t, double gamma,
                                      std::span<const double> shifts,
                                      const ChemicalShiftGrid& grid) {
    if (shifts.size() != t.multiplets.size()) {
        throw std::invalid_argument("evaluate_template: one shift per multiplet required");
    }
    std::vector<double> col(grid.size(), 0.0);
    for (std::size_t u = 0; u < t.multiplets.size(); ++u) {
        add_multiplet_to_column(col, grid, t.multiplets[u], t.multiplets[u].proton_count,
                                gamma, shifts[u]);
    }
    return col;
}

namespace {

TemplateMatrix build_matrix_impl(const SignatureCatalog& c, double gamma,
                                 std::span<const double> shifts,
                                 std::span<const double> log_width_offsets,
                                 const ChemicalShiftGrid& grid, bool parallel) {
    const std::size_t n = grid.size();
    const std::size_t M = c.templates.size();
    std::size_t total_multiplets = 0;
    for (const auto& t : c.templates) total_multiplets += t.multiplets.size();
    if (shifts.size() != total_multiplets) {
        throw std::invalid_argument("build_template_matrix: shift count mismatch");
    }
    if (!log_width_offsets.empty() && log_width_offsets.size() != M) {
        throw std::invalid_argument("build_template_matrix: random-effect count mismatch");
    }

    TemplateMatrix out;
    out.rows = n;
    out.cols = M;
    out.values.assign(n * M, 0.0);
    out.gamma = gamma;
    out.shifts.assign(shifts.begin(), shifts.end());
    out.log_width_offsets.assign(log_width_offsets.begin(), log_width_offsets.end());

    std::vector<std::size_t> shift_offset(M, 0);
    for (std::size_t m = 1; m < M; ++m) {
        shift_offset[m] = shift_offset[m - 1] + c.templates[m - 1].multiplets.size();
    }

    auto fill_column = [&](std::size_t m) {
        const MetaboliteTemplate& t = c.templates[m];
        const double g_eff =
            log_width_offsets.empty() ? gamma : gamma * std::exp(log_width_offsets[m]);
        std::span<double> col(out.values.data() + m * n, n);
        for (std::size_t u = 0; u < t.multiplets.size(); ++u) {
            add_multiplet_to_column(col, grid, t.multiplets[u], t.multiplets[u].proton_count,
                                    g_eff, shifts[shift_offset[m] + u]);
        }
    };

    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t m = 0; m < static_cast<std::ptrdiff_t>(M); ++m) {
            fill_column(static_cast<std::size_t>(m));
        }
    } else {
        for (std::size_t m = 0; m < M; ++m) fill_column(m);
    }
    return out;
}

} // namespace

TemplateMatrix build_template_matrix(const SignatureCatalog& c, double gamma,
                                     std::span<const double> shifts,
                                     std::span<const double> log_width_offsets,
                                     const ChemicalShiftGrid& grid) {
    return build_matrix_impl(c, gamma, shifts, log_width_offsets, grid, true);
}

TemplateMatrix build_template_matrix_serial(const SignatureCatalog& c, double gamma,
                                            std::span<const double> shifts,
                                            std::span<const double> log_width_offsets,
                                            const ChemicalShiftGrid& grid) {
    return build_matrix_impl(c, gamma, shifts, log_width_offsets, grid, false);
}

} // namespace nmrdecon
