#include "nmrdecon/catalog.hpp"
#include "nmrdecon/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace nmrdecon {

namespace {

const std::map<std::string, MultipletKind> kKindNames = {
    {"singlet", MultipletKind::Singlet},
    {"doublet", MultipletKind::Doublet},
    {"triplet", MultipletKind::Triplet},
    {"quartet", MultipletKind::Quartet},
    {"quintet", MultipletKind::Quintet},
    {"doublet-of-doublets", MultipletKind::DoubletOfDoublets},
    {"triplet-of-doublets", MultipletKind::TripletOfDoublets},
    {"explicit-peak-list", MultipletKind::ExplicitPeakList},
};

std::size_t required_j_count(MultipletKind kind) {
    switch (kind) {
        case MultipletKind::Singlet: return 0;
        case MultipletKind::Doublet:
        case MultipletKind::Triplet:
        case MultipletKind::Quartet:
        case MultipletKind::Quintet: return 1;
        case MultipletKind::DoubletOfDoublets:
        case MultipletKind::TripletOfDoublets: return 2;
        case MultipletKind::ExplicitPeakList: return 0;
    }
    return 0;
}

// Offsets (in units of J) and binomial weights of a 1D splitting pattern with
// `lines` equally spaced peaks.
std::vector<Peak> binomial_pattern(int lines, double j_hz) {
    std::vector<double> w(static_cast<std::size_t>(lines), 1.0);
    for (int row = 1; row < lines; ++row) {
        for (int i = row - 1; i > 0; --i) w[static_cast<std::size_t>(i)] += w[static_cast<std::size_t>(i - 1)];
    }
    double total = 0;
    for (double v : w) total += v;
    std::vector<Peak> out(static_cast<std::size_t>(lines));
    for (int i = 0; i < lines; ++i) {
        out[static_cast<std::size_t>(i)].offset_ppm = (i - (lines - 1) / 2.0) * j_hz;
        out[static_cast<std::size_t>(i)].weight = w[static_cast<std::size_t>(i)] / total;
    }
    return out;
}

// Tensor product of two splitting patterns; coincident offsets are merged.
std::vector<Peak> combine_patterns(const std::vector<Peak>& a, const std::vector<Peak>& b) {
    std::vector<Peak> out;
    out.reserve(a.size() * b.size());
    for (const Peak& pa : a) {
        for (const Peak& pb : b) {
            out.push_back({pa.offset_ppm + pb.offset_ppm, pa.weight * pb.weight});
        }
    }
    std::sort(out.begin(), out.end(),
              [](const Peak& x, const Peak& y) { return x.offset_ppm < y.offset_ppm; });
    std::vector<Peak> merged;
    for (const Peak& p : out) {
        if (!merged.empty() && std::abs(p.offset_ppm - merged.back().offset_ppm) < 1e-12) {
            merged.back().weight += p.weight;
        } else {
            merged.push_back(p);
        }
    }
    return merged;
}

} // namespace

MultipletKind parse_multiplet_kind(const std::string& name) {
    auto it = kKindNames.find(name);
    if (it == kKindNames.end()) {
        throw DataError("catalog error: unknown multiplet kind '" + name + "'");
    }
    return it->second;
}

std::string multiplet_kind_name(MultipletKind kind) {
    for (const auto& [name, k] : kKindNames) {
        if (k == kind) return name;
    }
    return "?";
}

std::vector<Peak> expand_multiplet_kind(MultipletKind kind, std::span<const double> j_hz,
                                        double frequency_mhz) {
    if (!(frequency_mhz > 0)) {
        throw DataError("catalog error: spectrometer frequency must be positive");
    }
    if (j_hz.size() != required_j_count(kind)) {
        std::ostringstream os;
        os << "catalog error: kind '" << multiplet_kind_name(kind) << "' needs "
           << required_j_count(kind) << " J-coupling(s), got " << j_hz.size();
        throw DataError(os.str());
    }
    std::vector<Peak> hz;
    switch (kind) {
        case MultipletKind::Singlet: hz = {{0.0, 1.0}}; break;
        case MultipletKind::Doublet: hz = binomial_pattern(2, j_hz[0]); break;
        case MultipletKind::Triplet: hz = binomial_pattern(3, j_hz[0]); break;
        case MultipletKind::Quartet: hz = binomial_pattern(4, j_hz[0]); break;
        case MultipletKind::Quintet: hz = binomial_pattern(5, j_hz[0]); break;
        case MultipletKind::DoubletOfDoublets:
            hz = combine_patterns(binomial_pattern(2, j_hz[0]), binomial_pattern(2, j_hz[1]));
            break;
        case MultipletKind::TripletOfDoublets:
            hz = combine_patterns(binomial_pattern(3, j_hz[0]), binomial_pattern(2, j_hz[1]));
            break;
        case MultipletKind::ExplicitPeakList:
            throw DataError("catalog error: explicit-peak-list has no first-order expansion");
    }
    for (Peak& p : hz) p.offset_ppm /= frequency_mhz;
    return hz;
}

void Multiplet::validate(const std::string& context) const {
    auto fail = [&](const std::string& what) {
        throw DataError("catalog error" + (context.empty() ? "" : " in " + context) + ": " + what);
    };
    if (!(proton_count > 0)) fail("proton count must be positive");
    if (peaks.empty()) fail("multiplet has no peaks");
    if (!(shift_prior_sd_ppm > 0)) fail("shift prior sd must be positive");
    if (!(shift_prior_halfwidth_ppm > 0)) fail("shift prior halfwidth must be positive");
    double wsum = 0, com = 0;
    for (const Peak& p : peaks) {
        if (!(p.weight > 0)) fail("peak weights must be positive");
        wsum += p.weight;
        com += p.weight * p.offset_ppm;
    }
    if (std::abs(wsum - 1.0) > 1e-12) fail("peak weights must sum to one");
    if (std::abs(com) > 1e-12) fail("peak offsets must have zero center of mass");
    if (kind != MultipletKind::ExplicitPeakList) {
        // declared kinds must be mirror symmetric: offsets negate onto each other
        // with equal weights
        for (const Peak& p : peaks) {
            bool found = false;
            for (const Peak& q : peaks) {
                if (std::abs(q.offset_ppm + p.offset_ppm) < 1e-12 &&
                    std::abs(q.weight - p.weight) < 1e-12) {
                    found = true;
                    break;
                }
            }
            if (!found) fail("declared-kind multiplet has asymmetric peaks");
        }
    }
}

double MetaboliteTemplate::total_protons() const {
    double z = 0;
    for (const Multiplet& m : multiplets) z += m.proton_count;
    return z;
}

void SignatureCatalog::validate() const {
    std::set<std::string> names;
    for (const MetaboliteTemplate& t : templates) {
        if (!names.insert(t.name).second) {
            throw DataError("catalog error: duplicate metabolite name '" + t.name + "'");
        }
        if (t.multiplets.empty()) {
            throw DataError("catalog error: metabolite '" + t.name + "' has no multiplets");
        }
        if (!(t.total_protons() > 0)) {
            throw DataError("catalog error: metabolite '" + t.name + "' has no protons");
        }
        for (std::size_t u = 0; u < t.multiplets.size(); ++u) {
            t.multiplets[u].validate(t.name + "[" + std::to_string(u) + "]");
        }
    }
}

SignatureCatalog load_catalog(const std::string& path, double frequency_mhz) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open catalog file: " + path);
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw DataError(std::string("catalog error: invalid JSON: ") + e.what());
    }

    SignatureCatalog cat;
    if (!doc.contains("metabolites") || !doc["metabolites"].is_array()) {
        throw DataError("catalog error: top-level 'metabolites' array missing");
    }
    for (const auto& jm : doc["metabolites"]) {
        MetaboliteTemplate tpl;
        if (!jm.contains("name") || !jm["name"].is_string()) {
            throw DataError("catalog error: metabolite without a name");
        }
        tpl.name = jm["name"].get<std::string>();
        if (!jm.contains("multiplets") || !jm["multiplets"].is_array()) {
            throw DataError("catalog error: metabolite '" + tpl.name + "' lacks 'multiplets'");
        }
        int u = 0;
        for (const auto& ju : jm["multiplets"]) {
            const std::string where = tpl.name + "[" + std::to_string(u) + "]";
            Multiplet mult;
            try {
                mult.shift_estimate_ppm = ju.at("shift_ppm").get<double>();
                mult.proton_count = ju.at("protons").get<double>();
            } catch (const std::exception&) {
                throw DataError("catalog error in " + where + ": 'shift_ppm' and 'protons' are required");
            }
            if (!(mult.proton_count > 0)) {
                throw DataError("catalog error in " + where + ": nonpositive proton count");
            }
            mult.shift_prior_sd_ppm = ju.value("shift_prior_sd_ppm", 0.01);
            mult.shift_prior_halfwidth_ppm = ju.value("shift_prior_halfwidth_ppm", 0.03);

            const bool has_kind = ju.contains("kind");
            const bool has_peaks = ju.contains("peaks");
            if (has_peaks && has_kind &&
                parse_multiplet_kind(ju["kind"].get<std::string>()) != MultipletKind::ExplicitPeakList) {
                throw DataError("catalog error in " + where +
                                ": give either a kind with J-couplings or an explicit peak list, not both");
            }
            if (has_peaks) {
                mult.kind = MultipletKind::ExplicitPeakList;
                double wsum = 0, com_hz = 0;
                for (const auto& jp : ju["peaks"]) {
                    Peak p;
                    try {
                        p.offset_ppm = jp.at("offset_hz").get<double>() / frequency_mhz;
                        p.weight = jp.at("weight").get<double>();
                    } catch (const std::exception&) {
                        throw DataError("catalog error in " + where +
                                        ": peaks need 'offset_hz' and 'weight'");
                    }
                    if (!(p.weight > 0)) {
                        throw DataError("catalog error in " + where + ": nonpositive peak weight");
                    }
                    wsum += p.weight;
                    mult.peaks.push_back(p);
                }
                if (mult.peaks.empty()) {
                    throw DataError("catalog error in " + where + ": empty peak list");
                }
                for (Peak& p : mult.peaks) {
                    p.weight /= wsum;
                    com_hz += p.weight * p.offset_ppm;
                }
                for (Peak& p : mult.peaks) p.offset_ppm -= com_hz;
                if (std::abs(wsum - 1.0) > 1e-6 || std::abs(com_hz) > 1e-6) {
                    std::ostringstream os;
                    os << "adjusted explicit peak list of " << where << ": weight sum " << wsum
                       << ", center-of-mass shift " << com_hz << " ppm";
                    cat.warnings.push_back(os.str());
                }
                std::sort(mult.peaks.begin(), mult.peaks.end(),
                          [](const Peak& a, const Peak& b) { return a.offset_ppm < b.offset_ppm; });
            } else if (has_kind) {
                mult.kind = parse_multiplet_kind(ju["kind"].get<std::string>());
                if (mult.kind == MultipletKind::ExplicitPeakList) {
                    throw DataError("catalog error in " + where +
                                    ": explicit-peak-list requires a 'peaks' array");
                }
                if (ju.contains("j_hz")) {
                    mult.j_couplings_hz = ju["j_hz"].get<std::vector<double>>();
                }
                try {
                    mult.peaks = expand_multiplet_kind(mult.kind, mult.j_couplings_hz, frequency_mhz);
                } catch (const DataError& e) {
                    throw DataError(std::string(e.what()) + " (" + where + ")");
                }
            } else {
                throw DataError("catalog error in " + where +
                                ": multiplet needs a 'kind' or an explicit 'peaks' list");
            }
            mult.validate(where);
            tpl.multiplets.push_back(std::move(mult));
            ++u;
        }
        cat.templates.push_back(std::move(tpl));
    }
    cat.validate();
    return cat;
}

} // namespace nmrdecon
