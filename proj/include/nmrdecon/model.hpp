#pragma once

#include "nmrdecon/catalog.hpp"
#include "nmrdecon/prior.hpp"
#include "nmrdecon/spectrum.hpp"
#include "nmrdecon/wavelet.hpp"

#include <span>
#include <string>
#include <vector>

namespace nmrdecon {

// Tolerance used when checking the half-plane indicator; absorbs incremental
// cache roundoff without affecting genuinely violating states.
inline constexpr double kIndicatorSlack = 1e-9;

/// One fittable multiplet with its shift-prior settings resolved.
struct MultipletEntry {
    int metabolite = 0;
    const Multiplet* mult = nullptr;
    double prior_center = 0;
    double prior_sd = 0.01;
    double prior_halfwidth = 0.03;
};

/// Everything immutable a chain needs to fit one spectrum.
struct FitContext {
    Spectrum spectrum; // standardized (unless disabled), possibly region-restricted
    WaveletPlan plan;
    std::vector<double> wy; // forward transform of the extended intensities
    const SignatureCatalog* catalog = nullptr;
    PriorConfig prior;
    std::vector<MultipletEntry> multiplets;       // only those overlapping the grid
    std::vector<std::vector<int>> met_multiplets; // metabolite -> entry indices
    std::vector<std::string> notes;               // dropped out-of-range multiplets

    int n() const { return plan.n; }
    int p() const { return plan.p; }
    int metabolite_count() const { return static_cast<int>(met_multiplets.size()); }
    int multiplet_count() const { return static_cast<int>(multiplets.size()); }
};

FitContext make_fit_context(Spectrum spectrum, const SignatureCatalog& catalog,
                            const PriorConfig& prior, int levels = -1,
                            ExtensionPolicy extension = ExtensionPolicy::Auto);

/// Per-spectrum chain parameters plus derived caches.
struct SpectrumState {
    std::vector<double> theta; // p wavelet coefficients
    std::vector<double> psi;   // p local precisions
    std::vector<double> tau;   // n truncation limits
    double lambda = 1.0;
    double gamma = 1.0;              // peak-width, ppm
    std::vector<double> shifts;      // per multiplet entry
    std::vector<double> re;          // per metabolite log peak-width offsets (may be empty)

    // caches
    std::vector<double> tcols;    // n x M data-domain template columns, column major
    std::vector<double> wtcols;   // p x M wavelet-domain columns
    std::vector<double> wt_norm2; // M squared norms
    std::vector<double> fit_w;    // sum_m beta_m wtcols[m]
    std::vector<double> fit_d;    // sum_m beta_m tcols[m] on the observed grid
    std::vector<double> resid_w;  // wy - fit_w - theta
    std::vector<double> xi;       // inverse transform of theta at observed positions

    double re_of(int m) const { return re.empty() ? 0.0 : re[static_cast<std::size_t>(m)]; }
};

/// Full chain state: concentrations shared across spectra.
struct ModelState {
    std::vector<double> beta;
    std::vector<SpectrumState> s;
};

ModelState init_state(std::span<const FitContext> ctxs);

/// Rebuilds every cache of one spectrum state from its parameters.
void rebuild_spectrum_caches(SpectrumState& st, const FitContext& ctx,
                             std::span<const double> beta);

/// Rebuilds template column m after a shift / peak-width / random-effect change,
/// updating fit_w and resid_w incrementally.
void refresh_metabolite_column(SpectrumState& st, const FitContext& ctx,
                               std::span<const double> beta, int m);

/// Builds the data- and wavelet-domain column of metabolite m for candidate
/// parameters without touching the state.
struct ColumnProposal {
    std::vector<double> tcol;
    std::vector<double> wtcol;
    double norm2 = 0;
};
ColumnProposal propose_column(const FitContext& ctx, int m, double gamma_eff,
                              std::span<const double> shifts_for_m);

/// Largest absolute inconsistency between caches and a from-scratch rebuild.
double max_cache_drift(const SpectrumState& st, const FitContext& ctx,
                       std::span<const double> beta);

// ---- densities -------------------------------------------------------------

double log_likelihood(const SpectrumState& st, const FitContext& ctx);

/// Joint log prior (up to an additive constant); -inf when an indicator fails.
double log_prior(const ModelState& state, std::span<const FitContext> ctxs);

struct CondOptions {
    double temperature = 1.0;
    bool likelihood_off = false; // diagnostic mode: target the prior alone
};

/// Tempered target: likelihood^(1/T) times the prior with c_j scaled to c_j T.
double log_posterior(const ModelState& state, std::span<const FitContext> ctxs,
                     const CondOptions& opt = {});

/// Joint density over per-spectrum states that share beta; throws DataError on a
/// beta mismatch.
double multi_spectrum_log_posterior(const std::vector<ModelState>& states,
                                    std::span<const FitContext> ctxs,
                                    const CondOptions& opt = {});

// ---- full conditionals -----------------------------------------------------

struct TruncNormalSpec {
    double mean = 0, var = 1;
    double lo = 0, hi = 0;
};
struct GammaSpec {
    double shape = 1, rate = 1;
};

TruncNormalSpec beta_conditional(const ModelState& state, std::span<const FitContext> ctxs,
                                 int m, const CondOptions& opt = {});
TruncNormalSpec theta_conditional(const SpectrumState& st, const FitContext& ctx, int jk,
                                  const CondOptions& opt = {});
GammaSpec psi_conditional(const SpectrumState& st, const FitContext& ctx, int jk,
                          const CondOptions& opt = {});
TruncNormalSpec tau_conditional(const SpectrumState& st, const FitContext& ctx, int i,
                                const CondOptions& opt = {});
GammaSpec lambda_conditional(const SpectrumState& st, const FitContext& ctx,
                             const CondOptions& opt = {});

enum class CoordFamily { Beta, Theta, Psi, Tau, Lambda };

struct ConditionalSpec {
    bool is_gamma = false;
    TruncNormalSpec tn;
    GammaSpec gamma_dist;
};

ConditionalSpec full_conditional_params(const ModelState& state,
                                        std::span<const FitContext> ctxs, CoordFamily family,
                                        int spectrum_index, int coord,
                                        const CondOptions& opt = {});

/// Interval of theta_jk permitted by the half-plane constraints given the rest.
std::pair<double, double> theta_bounds(const SpectrumState& st, const FitContext& ctx, int jk);

} // namespace nmrdecon
