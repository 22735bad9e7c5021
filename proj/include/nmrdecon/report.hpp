#pragma once

#include <span>
#include <string>
#include <vector>

namespace nmrdecon {

double mean_of(std::span<const double> v);
double sd_of(std::span<const double> v);
/// Type-7 (linear interpolation) quantile of an unsorted sample.
double quantile_of(std::span<const double> v, double q);
double pearson_correlation(std::span<const double> x, std::span<const double> y);
/// Effective sample size via Geyer's initial positive sequence estimator.
double effective_sample_size(std::span<const double> chain);

/// One scored quantity: a concentration estimate against its simulated truth.
struct ConcentrationRow {
    int replicate = 0;
    std::string metabolite;
    double truth = 0;
    double bayes = 0;
    double integration = 0;
    double integration_raw_printed = 0; // the literal printed-formula value, for transparency
};

struct ShiftRow {
    int replicate = 0;
    std::string metabolite;
    int multiplet = 0;
    double truth = 0;
    double estimate = 0;
};

struct BenchReport {
    std::vector<ConcentrationRow> concentrations;
    std::vector<ShiftRow> shifts;
    double mqe_bayes = 0;
    double mqe_integration = 0;
    double pearson_bayes = 0;
    double pearson_integration = 0;
    double frac_within_0002 = 0;
    double frac_within_0015 = 0;
};

/// Aggregates per-item rows into the report metrics.
BenchReport score(std::vector<ConcentrationRow> concentrations, std::vector<ShiftRow> shifts);

void write_report_csv(const BenchReport& report, const std::string& concentrations_path,
                      const std::string& shifts_path);
void write_report_json(const BenchReport& report, const std::string& path);

} // namespace nmrdecon
