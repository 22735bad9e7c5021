#pragma once

#include <span>
#include <string>
#include <vector>

namespace nmrdecon {

enum class MultipletKind {
    Singlet,
    Doublet,
    Triplet,
    Quartet,
    Quintet,
    DoubletOfDoublets,
    TripletOfDoublets,
    ExplicitPeakList,
};

MultipletKind parse_multiplet_kind(const std::string& name);
std::string multiplet_kind_name(MultipletKind kind);

struct Peak {
    double offset_ppm = 0; // horizontal offset from the multiplet center of mass
    double weight = 1;     // relative peak height; weights sum to one over a multiplet
};

struct Multiplet {
    double shift_estimate_ppm = 0; // database estimate of the center of mass
    double proton_count = 1;       // may be non-integral (effective proton contribution)
    MultipletKind kind = MultipletKind::Singlet;
    std::vector<double> j_couplings_hz;
    std::vector<Peak> peaks; // canonical: sorted by offset, unit weight sum, zero center of mass
    double shift_prior_sd_ppm = 0.01;
    double shift_prior_halfwidth_ppm = 0.03;

    /// Enforces weight-sum, center-of-mass and (for declared kinds) symmetry invariants.
    void validate(const std::string& context = "") const;
};

struct MetaboliteTemplate {
    std::string name;
    std::vector<Multiplet> multiplets;

    double total_protons() const;
};

struct SignatureCatalog {
    std::vector<MetaboliteTemplate> templates;
    std::vector<std::string> warnings; // non-fatal load diagnostics

    std::size_t size() const { return templates.size(); }
    void validate() const;
};

/// First-order peak configuration for a multiplet kind: binomial weights, arithmetic
/// offsets from the J-couplings, converted from Hz to ppm with the spectrometer frequency.
std::vector<Peak> expand_multiplet_kind(MultipletKind kind, std::span<const double> j_hz,
                                        double frequency_mhz);

/// Loads a JSON catalog. J-couplings and explicit peak offsets given in Hz are converted
/// to ppm once, using the supplied spectrometer frequency.
SignatureCatalog load_catalog(const std::string& path, double frequency_mhz);

} // namespace nmrdecon
