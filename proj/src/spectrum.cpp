#include "nmrdecon/spectrum.hpp"
#include "nmrdecon/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace nmrdecon {

void ChemicalShiftGrid::validate() const {
    if (points.size() < 2) {
        throw DataError("grid error: need at least two chemical-shift points");
    }
    if (!(spectrometer_frequency_mhz > 0)) {
        throw DataError("grid error: spectrometer frequency must be positive");
    }
    const double d0 = points[1] - points[0];
    if (!(d0 > 0)) {
        throw DataError("grid error: chemical shifts must be strictly increasing");
    }
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double d = points[i] - points[i - 1];
        if (!(d > 0)) {
            throw DataError("grid error: chemical shifts must be strictly increasing");
        }
        if (std::abs(d - d0) / d0 > kRegularityTol) {
            std::ostringstream os;
            os << "grid error: irregular spacing at point " << i << " (" << d
               << " vs " << d0 << ", relative deviation " << std::abs(d - d0) / d0 << ")";
            throw DataError(os.str());
        }
    }
}

namespace {

bool parse_two_numbers(const std::string& line, double& a, double& b) {
    const char* p = line.c_str();
    const char* end = p + line.size();
    auto skip_sep = [&](const char* q) {
        while (q < end && (*q == ' ' || *q == '\t' || *q == ',' || *q == ';')) ++q;
        return q;
    };
    p = skip_sep(p);
    auto r1 = std::from_chars(p, end, a);
    if (r1.ec != std::errc{}) return false;
    p = skip_sep(r1.ptr);
    if (p == r1.ptr) return false; // no separator between the two fields
    auto r2 = std::from_chars(p, end, b);
    if (r2.ec != std::errc{}) return false;
    p = skip_sep(r2.ptr);
    return p == end;
}

} // namespace

Spectrum load_spectrum(const std::string& path, double spectrometer_frequency_mhz) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open spectrum file: " + path);
    }
    std::vector<std::pair<double, double>> rows;
    std::string line;
    long lineno = 0;
    bool header_allowance = true; // a single leading non-numeric line is treated as a header
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        if (line[first] == '#') continue;
        double ppm = 0, inten = 0;
        if (!parse_two_numbers(line, ppm, inten)) {
            if (header_allowance && rows.empty()) {
                header_allowance = false;
                continue;
            }
            std::ostringstream os;
            os << "malformed spectrum input at " << path << ":" << lineno
               << ": expected 'ppm<sep>intensity', got '" << line << "'";
            throw DataError(os.str());
        }
        rows.emplace_back(ppm, inten);
    }
    if (rows.size() < 2) {
        throw DataError("malformed spectrum input: fewer than two data rows in " + path);
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    Spectrum s;
    s.grid.spectrometer_frequency_mhz = spectrometer_frequency_mhz;
    s.grid.points.reserve(rows.size());
    s.intensities.reserve(rows.size());
    for (const auto& [ppm, inten] : rows) {
        s.grid.points.push_back(ppm);
        s.intensities.push_back(inten);
    }
    s.grid.validate();
    return s;
}

Spectrum standardize(const Spectrum& s) {
    double sum = std::accumulate(s.intensities.begin(), s.intensities.end(), 0.0);
    double abs_sum = 0;
    for (double v : s.intensities) abs_sum += std::abs(v);
    if (sum == 0.0 || std::abs(sum) <= 1e-12 * abs_sum) {
        throw DataError("degenerate spectrum: intensities sum to zero, cannot standardize");
    }
    Spectrum out = s;
    for (double& v : out.intensities) v /= sum;
    return out;
}

Spectrum restrict_region(const Spectrum& s, double lo, double hi) {
    if (!(lo < hi)) {
        throw DataError("empty region: lower bound must be below upper bound");
    }
    auto first = std::lower_bound(s.grid.points.begin(), s.grid.points.end(), lo);
    auto last = std::upper_bound(s.grid.points.begin(), s.grid.points.end(), hi);
    if (first >= last) {
        std::ostringstream os;
        os << "empty region: [" << lo << ", " << hi << "] does not overlap the grid ["
           << s.grid.lo() << ", " << s.grid.hi() << "]";
        throw DataError(os.str());
    }
    const std::size_t i0 = static_cast<std::size_t>(first - s.grid.points.begin());
    const std::size_t i1 = static_cast<std::size_t>(last - s.grid.points.begin());
    Spectrum out;
    out.grid.spectrometer_frequency_mhz = s.grid.spectrometer_frequency_mhz;
    out.grid.points.assign(s.grid.points.begin() + i0, s.grid.points.begin() + i1);
    out.intensities.assign(s.intensities.begin() + i0, s.intensities.begin() + i1);
    return out;
}

void write_spectrum(const Spectrum& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write spectrum file: " + path);
    }
    char buf[80];
    std::snprintf(buf, sizeof buf, "# spectrometer_frequency_mhz = %.17g\n",
                  s.grid.spectrometer_frequency_mhz);
    out << buf;
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g\n", s.grid.points[i], s.intensities[i]);
        out << buf;
    }
}

} // namespace nmrdecon
