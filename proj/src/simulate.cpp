#include "nmrdecon/simulate.hpp"
#include "nmrdecon/errors.hpp"
#include "nmrdecon/rng.hpp"
#include "nmrdecon/template_eval.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

namespace nmrdecon {

std::pair<Spectrum, GroundTruth> simulate(const SignatureCatalog& catalog,
                                          const SimulationConfig& config) {
    if (catalog.templates.empty()) throw ConfigError("simulate: empty catalog");
    if (config.n < 2) throw ConfigError("simulate: need at least two grid points");
    if (!(config.grid_lo < config.grid_hi)) throw ConfigError("simulate: bad grid range");
    if (config.noise_sd < 0 || config.shift_perturbation_ppm < 0) {
        throw ConfigError("simulate: negative noise or perturbation");
    }

    RngStream rng = RngStream::derive(config.seed, 7);

    Spectrum s;
    s.grid.spectrometer_frequency_mhz = config.frequency_mhz;
    s.grid.points.resize(static_cast<std::size_t>(config.n));
    const double dx = (config.grid_hi - config.grid_lo) / (config.n - 1);
    for (int i = 0; i < config.n; ++i) {
        s.grid.points[static_cast<std::size_t>(i)] = config.grid_lo + dx * i;
    }
    s.intensities.assign(static_cast<std::size_t>(config.n), 0.0);

    GroundTruth truth;
    truth.gamma_ppm =
        config.gamma_ppm > 0 ? config.gamma_ppm : 1.0 / config.frequency_mhz;
    truth.hump_sd_ppm = config.hump_sd_ppm;
    truth.noise_sd = config.noise_sd;

    double parametric_mass = 0;
    for (const MetaboliteTemplate& t : catalog.templates) {
        truth.names.push_back(t.name);
        const double beta = rng.uniform(config.conc_lo, config.conc_hi);
        truth.concentrations.push_back(beta);
        parametric_mass += beta * t.total_protons();
    }
    for (const MetaboliteTemplate& t : catalog.templates) {
        for (const Multiplet& m : t.multiplets) {
            const double perturb =
                rng.uniform(-config.shift_perturbation_ppm, config.shift_perturbation_ppm);
            truth.true_shifts.push_back(m.shift_estimate_ppm + perturb);
        }
    }
    for (std::size_t m = 0; m < catalog.size(); ++m) {
        const double mult =
            config.width_jitter_sd > 0 ? std::exp(config.width_jitter_sd * rng.normal()) : 1.0;
        truth.width_multipliers.push_back(mult);
    }

    std::size_t shift_idx = 0;
    for (std::size_t m = 0; m < catalog.size(); ++m) {
        const MetaboliteTemplate& t = catalog.templates[m];
        const double g_eff = truth.gamma_ppm * truth.width_multipliers[m];
        for (const Multiplet& mult : t.multiplets) {
            add_multiplet_to_column(s.intensities, s.grid, mult,
                                    truth.concentrations[m] * mult.proton_count, g_eff,
                                    truth.true_shifts[shift_idx]);
            ++shift_idx;
        }
    }

    truth.hump_mean_ppm = rng.uniform(config.grid_lo, config.grid_hi);
    truth.hump_amplitude = config.hump_fraction * parametric_mass;
    if (truth.hump_amplitude > 0) {
        const double sd = config.hump_sd_ppm;
        for (int i = 0; i < config.n; ++i) {
            const double z = (s.grid.points[static_cast<std::size_t>(i)] - truth.hump_mean_ppm) / sd;
            s.intensities[static_cast<std::size_t>(i)] +=
                truth.hump_amplitude * std::exp(-0.5 * z * z) /
                (sd * std::sqrt(2.0 * std::numbers::pi));
        }
    }

    if (config.noise_sd > 0) {
        for (double& v : s.intensities) v += config.noise_sd * rng.normal();
    }

    truth.standardization_factor =
        std::accumulate(s.intensities.begin(), s.intensities.end(), 0.0);
    Spectrum out = standardize(s);
    return {std::move(out), std::move(truth)};
}

void GroundTruth::save(const std::string& path) const {
    nlohmann::json j;
    j["names"] = names;
    j["concentrations"] = concentrations;
    j["true_shifts"] = true_shifts;
    j["width_multipliers"] = width_multipliers;
    j["gamma_ppm"] = gamma_ppm;
    j["hump"] = {{"mean_ppm", hump_mean_ppm}, {"sd_ppm", hump_sd_ppm}, {"amplitude", hump_amplitude}};
    j["noise_sd"] = noise_sd;
    j["standardization_factor"] = standardization_factor;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write truth file: " + path);
    out << j.dump(2) << "\n";
}

GroundTruth GroundTruth::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open truth file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw DataError(std::string("truth file: invalid JSON: ") + e.what());
    }
    GroundTruth t;
    try {
        t.names = j.at("names").get<std::vector<std::string>>();
        t.concentrations = j.at("concentrations").get<std::vector<double>>();
        t.true_shifts = j.at("true_shifts").get<std::vector<double>>();
        t.width_multipliers = j.value("width_multipliers", std::vector<double>{});
        t.gamma_ppm = j.at("gamma_ppm").get<double>();
        t.hump_mean_ppm = j.at("hump").at("mean_ppm").get<double>();
        t.hump_sd_ppm = j.at("hump").at("sd_ppm").get<double>();
        t.hump_amplitude = j.at("hump").at("amplitude").get<double>();
        t.noise_sd = j.value("noise_sd", 0.0);
        t.standardization_factor = j.at("standardization_factor").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("truth file: missing field: ") + e.what());
    }
    if (t.width_multipliers.empty()) t.width_multipliers.assign(t.names.size(), 1.0);
    return t;
}

} // namespace nmrdecon
