#pragma once

#include <span>
#include <string>
#include <vector>

namespace nmrdecon {

/// One curve on the deconvolution plot.
struct PlotSeries {
    std::string label;
    std::string color = "#000000";
    bool dashed = false;
    std::vector<double> y;
};

/// Writes a static SVG line plot of the spectrum region. The chemical-shift axis
/// is drawn right-to-left, following NMR convention.
void write_deconvolution_svg(const std::string& path, std::span<const double> x,
                             const std::vector<PlotSeries>& series, const std::string& title);

} // namespace nmrdecon
