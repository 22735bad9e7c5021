#include "nmrdecon/report.hpp"
#include "nmrdecon/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace nmrdecon {

double mean_of(std::span<const double> v) {
    if (v.empty()) return 0;
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sd_of(std::span<const double> v) {
    if (v.size() < 2) return 0;
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double quantile_of(std::span<const double> v, double q) {
    if (v.empty()) return 0;
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    const double pos = q * static_cast<double>(s.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= s.size()) return s.back();
    const double frac = pos - static_cast<double>(i);
    return s[i] * (1.0 - frac) + s[i + 1] * frac;
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw DataError("correlation: need two aligned samples");
    }
    const double mx = mean_of(x), my = mean_of(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) return 0;
    return sxy / std::sqrt(sxx * syy);
}

double effective_sample_size(std::span<const double> chain) {
    const std::size_t n = chain.size();
    if (n < 4) return static_cast<double>(n);
    const double m = mean_of(chain);
    std::vector<double> centered(n);
    for (std::size_t i = 0; i < n; ++i) centered[i] = chain[i] - m;
    double c0 = 0;
    for (double x : centered) c0 += x * x;
    c0 /= static_cast<double>(n);
    if (c0 == 0) return static_cast<double>(n);

    auto autocov = [&](std::size_t lag) {
        double s = 0;
        for (std::size_t i = 0; i + lag < n; ++i) s += centered[i] * centered[i + lag];
        return s / static_cast<double>(n);
    };

    // sum adjacent-pair autocorrelations while they stay positive
    double tau = 1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t lag = 1; lag + 1 < n; lag += 2) {
        const double pair = (autocov(lag) + autocov(lag + 1)) / c0;
        if (pair <= 0) break;
        const double monotone = std::min(pair, prev_pair);
        tau += 2.0 * monotone;
        prev_pair = monotone;
    }
    return static_cast<double>(n) / tau;
}

BenchReport score(std::vector<ConcentrationRow> concentrations, std::vector<ShiftRow> shifts) {
    BenchReport rep;
    rep.concentrations = std::move(concentrations);
    rep.shifts = std::move(shifts);

    if (!rep.concentrations.empty()) {
        std::vector<double> truth, bayes, integ;
        double se_b = 0, se_i = 0;
        for (const auto& row : rep.concentrations) {
            truth.push_back(row.truth);
            bayes.push_back(row.bayes);
            integ.push_back(row.integration);
            se_b += (row.bayes - row.truth) * (row.bayes - row.truth);
            se_i += (row.integration - row.truth) * (row.integration - row.truth);
        }
        const double inv = 1.0 / static_cast<double>(rep.concentrations.size());
        rep.mqe_bayes = se_b * inv;
        rep.mqe_integration = se_i * inv;
        if (rep.concentrations.size() >= 2) {
            rep.pearson_bayes = pearson_correlation(truth, bayes);
            rep.pearson_integration = pearson_correlation(truth, integ);
        }
    }
    if (!rep.shifts.empty()) {
        std::size_t w2 = 0, w15 = 0;
        for (const auto& row : rep.shifts) {
            const double err = std::abs(row.estimate - row.truth);
            if (err <= 0.002) ++w2;
            if (err <= 0.015) ++w15;
        }
        rep.frac_within_0002 = static_cast<double>(w2) / static_cast<double>(rep.shifts.size());
        rep.frac_within_0015 = static_cast<double>(w15) / static_cast<double>(rep.shifts.size());
    }
    return rep;
}

void write_report_csv(const BenchReport& report, const std::string& concentrations_path,
                      const std::string& shifts_path) {
    {
        std::ofstream out(concentrations_path);
        if (!out) throw DataError("cannot write " + concentrations_path);
        out << "replicate,metabolite,truth,bayes,integration,integration_raw_printed\n";
        char buf[256];
        for (const auto& row : report.concentrations) {
            std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%.17g,%.17g,%.17g\n", row.replicate,
                          row.metabolite.c_str(), row.truth, row.bayes, row.integration,
                          row.integration_raw_printed);
            out << buf;
        }
    }
    {
        std::ofstream out(shifts_path);
        if (!out) throw DataError("cannot write " + shifts_path);
        out << "replicate,metabolite,multiplet,truth,estimate,abs_error\n";
        char buf[256];
        for (const auto& row : report.shifts) {
            std::snprintf(buf, sizeof buf, "%d,%s,%d,%.17g,%.17g,%.17g\n", row.replicate,
                          row.metabolite.c_str(), row.multiplet, row.truth, row.estimate,
                          std::abs(row.estimate - row.truth));
            out << buf;
        }
    }
}

void write_report_json(const BenchReport& report, const std::string& path) {
    nlohmann::json j;
    j["mean_quadratic_error"] = {{"bayes", report.mqe_bayes},
                                 {"integration", report.mqe_integration}};
    j["pearson"] = {{"bayes", report.pearson_bayes}, {"integration", report.pearson_integration}};
    j["shifts_within"] = {{"0.002_ppm", report.frac_within_0002},
                          {"0.015_ppm", report.frac_within_0015}};
    j["items"] = {{"concentrations", report.concentrations.size()},
                  {"shifts", report.shifts.size()}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << "\n";
}

} // namespace nmrdecon
