#include "nmrdecon/model.hpp"
#include "nmrdecon/errors.hpp"
#include "nmrdecon/template_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace nmrdecon {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void PriorConfigValidateImpl(const PriorConfig& pc) {
    auto req = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("prior config: ") + what);
    };
    req(pc.a > 0, "a must be positive");
    req(pc.b > 0, "b must be positive");
    req(pc.c_shrink > 0, "c must be positive");
    req(pc.d_shrink > 0, "d must be positive");
    for (double c : pc.c_levels) req(c > 0, "c must be positive");
    for (double d : pc.d_levels) req(d > 0, "d must be positive");
    req(pc.h < 0, "h must be negative");
    req(pc.r > 0, "r must be positive");
    req(pc.s_abundance > 0, "abundance precision must be positive");
    req(pc.re_sd > 0 || !pc.random_effects, "random-effect sd must be positive");
    if (pc.shift_sd_override) req(*pc.shift_sd_override > 0, "shift sd must be positive");
    if (pc.shift_halfwidth_override)
        req(*pc.shift_halfwidth_override > 0, "shift halfwidth must be positive");
}

} // namespace

void PriorConfig::validate() const { PriorConfigValidateImpl(*this); }

FitContext make_fit_context(Spectrum spectrum, const SignatureCatalog& catalog,
                            const PriorConfig& prior, int levels, ExtensionPolicy extension) {
    prior.validate();
    catalog.validate();
    spectrum.grid.validate();
    if (spectrum.intensities.size() != spectrum.grid.size()) {
        throw DataError("spectrum intensity/grid length mismatch");
    }

    FitContext ctx;
    ctx.spectrum = std::move(spectrum);
    ctx.plan = make_plan(static_cast<int>(ctx.spectrum.size()), levels, extension);
    ctx.wy = forward(ctx.plan, ctx.spectrum.intensities);
    ctx.catalog = &catalog;
    ctx.prior = prior;

    const double lo = ctx.spectrum.grid.lo();
    const double hi = ctx.spectrum.grid.hi();
    ctx.met_multiplets.resize(catalog.size());
    for (std::size_t m = 0; m < catalog.size(); ++m) {
        const MetaboliteTemplate& t = catalog.templates[m];
        for (std::size_t u = 0; u < t.multiplets.size(); ++u) {
            const Multiplet& mult = t.multiplets[u];
            MultipletEntry e;
            e.metabolite = static_cast<int>(m);
            e.mult = &mult;
            e.prior_center = mult.shift_estimate_ppm;
            e.prior_sd = prior.shift_sd_override.value_or(mult.shift_prior_sd_ppm);
            e.prior_halfwidth =
                prior.shift_halfwidth_override.value_or(mult.shift_prior_halfwidth_ppm);
            if (e.prior_center + e.prior_halfwidth < lo || e.prior_center - e.prior_halfwidth > hi) {
                std::ostringstream os;
                os << "multiplet " << t.name << "[" << u << "] at " << e.prior_center
                   << " ppm lies outside the fitted region; excluded";
                ctx.notes.push_back(os.str());
                continue;
            }
            ctx.met_multiplets[m].push_back(static_cast<int>(ctx.multiplets.size()));
            ctx.multiplets.push_back(e);
        }
        if (ctx.met_multiplets[m].empty()) {
            throw ConfigError("no multiplet of metabolite '" + t.name +
                              "' overlaps the spectrum range");
        }
    }
    return ctx;
}

ModelState init_state(std::span<const FitContext> ctxs) {
    if (ctxs.empty()) throw ConfigError("no spectra to fit");
    const int M = ctxs[0].metabolite_count();
    for (const FitContext& c : ctxs) {
        if (c.metabolite_count() != M) {
            throw ConfigError("spectra disagree on the catalog size");
        }
    }
    ModelState state;
    state.beta.assign(static_cast<std::size_t>(M), 1e-3);
    state.s.resize(ctxs.size());
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        const FitContext& ctx = ctxs[k];
        SpectrumState& st = state.s[k];
        const auto p = static_cast<std::size_t>(ctx.p());
        const auto n = static_cast<std::size_t>(ctx.n());
        st.theta.assign(p, 0.0);
        st.psi.assign(p, 1.0);
        st.tau.assign(n, ctx.prior.h);
        double wy2 = 0;
        for (double v : ctx.wy) wy2 += v * v;
        st.lambda = std::max(1.0, static_cast<double>(ctx.p()) / std::max(wy2, 1e-300));
        st.gamma = 1.0 / ctx.spectrum.grid.spectrometer_frequency_mhz;
        st.shifts.resize(ctx.multiplets.size());
        for (std::size_t j = 0; j < ctx.multiplets.size(); ++j) {
            st.shifts[j] = ctx.multiplets[j].prior_center;
        }
        if (ctx.prior.random_effects) st.re.assign(static_cast<std::size_t>(M), 0.0);
        rebuild_spectrum_caches(st, ctx, state.beta);
    }
    return state;
}

ColumnProposal propose_column(const FitContext& ctx, int m, double gamma_eff,
                              std::span<const double> shifts_for_m) {
    const auto& entries = ctx.met_multiplets[static_cast<std::size_t>(m)];
    if (shifts_for_m.size() != entries.size()) {
        throw std::invalid_argument("propose_column: shift count mismatch");
    }
    ColumnProposal out;
    out.tcol.assign(static_cast<std::size_t>(ctx.n()), 0.0);
    for (std::size_t j = 0; j < entries.size(); ++j) {
        const MultipletEntry& e = ctx.multiplets[static_cast<std::size_t>(entries[j])];
        add_multiplet_to_column(out.tcol, ctx.spectrum.grid, *e.mult, e.mult->proton_count,
                                gamma_eff, shifts_for_m[j]);
    }
    out.wtcol = forward(ctx.plan, out.tcol);
    out.norm2 = 0;
    for (double v : out.wtcol) out.norm2 += v * v;
    return out;
}

namespace {

std::vector<double> shifts_for_met(const SpectrumState& st, const FitContext& ctx, int m) {
    const auto& entries = ctx.met_multiplets[static_cast<std::size_t>(m)];
    std::vector<double> sh(entries.size());
    for (std::size_t j = 0; j < entries.size(); ++j) {
        sh[j] = st.shifts[static_cast<std::size_t>(entries[j])];
    }
    return sh;
}

} // namespace

void rebuild_spectrum_caches(SpectrumState& st, const FitContext& ctx,
                             std::span<const double> beta) {
    const auto n = static_cast<std::size_t>(ctx.n());
    const auto p = static_cast<std::size_t>(ctx.p());
    const auto M = static_cast<std::size_t>(ctx.metabolite_count());
    st.tcols.assign(n * M, 0.0);
    st.wtcols.assign(p * M, 0.0);
    st.wt_norm2.assign(M, 0.0);
    st.fit_w.assign(p, 0.0);
    st.fit_d.assign(n, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
        auto sh = shifts_for_met(st, ctx, static_cast<int>(m));
        ColumnProposal col =
            propose_column(ctx, static_cast<int>(m), st.gamma * std::exp(st.re_of(static_cast<int>(m))), sh);
        std::copy(col.tcol.begin(), col.tcol.end(), st.tcols.begin() + static_cast<std::ptrdiff_t>(m * n));
        std::copy(col.wtcol.begin(), col.wtcol.end(),
                  st.wtcols.begin() + static_cast<std::ptrdiff_t>(m * p));
        st.wt_norm2[m] = col.norm2;
        for (std::size_t i = 0; i < p; ++i) st.fit_w[i] += beta[m] * col.wtcol[i];
        for (std::size_t i = 0; i < n; ++i) st.fit_d[i] += beta[m] * col.tcol[i];
    }
    st.resid_w.resize(p);
    for (std::size_t i = 0; i < p; ++i) st.resid_w[i] = ctx.wy[i] - st.fit_w[i] - st.theta[i];
    std::vector<double> rec = inverse(ctx.plan, st.theta);
    st.xi.assign(rec.begin(), rec.begin() + static_cast<std::ptrdiff_t>(n));
}

void refresh_metabolite_column(SpectrumState& st, const FitContext& ctx,
                               std::span<const double> beta, int m) {
    const auto n = static_cast<std::size_t>(ctx.n());
    const auto p = static_cast<std::size_t>(ctx.p());
    auto sh = shifts_for_met(st, ctx, m);
    ColumnProposal col = propose_column(ctx, m, st.gamma * std::exp(st.re_of(m)), sh);
    const auto mm = static_cast<std::size_t>(m);
    const double bm = beta[mm];
    for (std::size_t i = 0; i < p; ++i) {
        const double delta = col.wtcol[i] - st.wtcols[mm * p + i];
        st.fit_w[i] += bm * delta;
        st.resid_w[i] -= bm * delta;
    }
    for (std::size_t i = 0; i < n; ++i) {
        st.fit_d[i] += bm * (col.tcol[i] - st.tcols[mm * n + i]);
    }
    std::copy(col.tcol.begin(), col.tcol.end(), st.tcols.begin() + static_cast<std::ptrdiff_t>(mm * n));
    std::copy(col.wtcol.begin(), col.wtcol.end(),
              st.wtcols.begin() + static_cast<std::ptrdiff_t>(mm * p));
    st.wt_norm2[mm] = col.norm2;
}

double max_cache_drift(const SpectrumState& st, const FitContext& ctx,
                       std::span<const double> beta) {
    SpectrumState fresh = st;
    rebuild_spectrum_caches(fresh, ctx, beta);
    double drift = 0;
    for (std::size_t i = 0; i < st.resid_w.size(); ++i) {
        drift = std::max(drift, std::abs(st.resid_w[i] - fresh.resid_w[i]));
        drift = std::max(drift, std::abs(st.fit_w[i] - fresh.fit_w[i]));
    }
    for (std::size_t i = 0; i < st.xi.size(); ++i) {
        drift = std::max(drift, std::abs(st.xi[i] - fresh.xi[i]));
        drift = std::max(drift, std::abs(st.fit_d[i] - fresh.fit_d[i]));
    }
    return drift;
}

double log_likelihood(const SpectrumState& st, const FitContext& ctx) {
    double ss = 0;
    for (double v : st.resid_w) ss += v * v;
    const double p = ctx.p();
    return 0.5 * p * std::log(st.lambda / (2.0 * std::numbers::pi)) - 0.5 * st.lambda * ss;
}

namespace {

// Per-spectrum prior terms of Eq-(7) form plus the parametric-component priors.
// The beta prior is handled once at the model level.
double spectrum_log_prior(const SpectrumState& st, const FitContext& ctx,
                          double c_scale /* tempering factor on c_j */) {
    const PriorConfig& pc = ctx.prior;
    const auto p = static_cast<std::size_t>(ctx.p());
    const auto n = static_cast<std::size_t>(ctx.n());

    if (!(st.lambda > 0) || !(st.gamma > 0)) return -kInf;

    // indicators
    for (std::size_t i = 0; i < n; ++i) {
        if (st.tau[i] > pc.h + kIndicatorSlack) return -kInf;
        if (st.xi[i] < st.tau[i] - kIndicatorSlack) return -kInf;
    }
    for (std::size_t j = 0; j < ctx.multiplets.size(); ++j) {
        const MultipletEntry& e = ctx.multiplets[j];
        if (st.shifts[j] < e.prior_center - e.prior_halfwidth ||
            st.shifts[j] > e.prior_center + e.prior_halfwidth) {
            return -kInf;
        }
    }

    double lp = 0;
    double psi_theta2 = 0;
    for (std::size_t jk = 0; jk < p; ++jk) {
        if (!(st.psi[jk] > 0)) return -kInf;
        const int level = ctx.plan.level_index[jk].level;
        const double c = pc.c_level(level) * c_scale;
        const double d = pc.d_level(level);
        lp += (c - 0.5) * std::log(st.psi[jk]) - 0.5 * d * st.psi[jk];
        psi_theta2 += st.psi[jk] * st.theta[jk] * st.theta[jk];
    }
    double tau_pen = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = st.tau[i] - pc.h;
        tau_pen += d * d;
    }
    lp += (pc.a + 0.5 * (static_cast<double>(p) + static_cast<double>(n)) - 1.0) *
          std::log(st.lambda);
    lp -= 0.5 * st.lambda * (pc.b + psi_theta2 + pc.r * tau_pen);

    // shift priors (truncation already checked)
    for (std::size_t j = 0; j < ctx.multiplets.size(); ++j) {
        const MultipletEntry& e = ctx.multiplets[j];
        const double z = (st.shifts[j] - e.prior_center) / e.prior_sd;
        lp -= 0.5 * z * z;
    }

    // peak-width prior (log-normal density in gamma space)
    const double mu = pc.gamma_log_location(ctx.spectrum.grid.spectrometer_frequency_mhz);
    const double s2 = PriorConfig::gamma_log_scale2();
    const double lg = std::log(st.gamma);
    lp += -lg - 0.5 * (lg - mu) * (lg - mu) / s2;

    if (pc.random_effects && !st.re.empty()) {
        for (double v : st.re) lp -= 0.5 * v * v / (pc.re_sd * pc.re_sd);
    }
    return lp;
}

double beta_log_prior(std::span<const double> beta, const PriorConfig& pc) {
    double lp = 0;
    for (double bm : beta) {
        if (bm < 0) return -kInf;
        const double d = bm - pc.e_abundance;
        lp -= 0.5 * pc.s_abundance * d * d;
    }
    return lp;
}

} // namespace

double log_prior(const ModelState& state, std::span<const FitContext> ctxs) {
    double lp = beta_log_prior(state.beta, ctxs[0].prior);
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        lp += spectrum_log_prior(state.s[k], ctxs[k], 1.0);
        if (lp == -kInf) return -kInf;
    }
    return lp;
}

double log_posterior(const ModelState& state, std::span<const FitContext> ctxs,
                     const CondOptions& opt) {
    const double T = opt.temperature;
    double lp = beta_log_prior(state.beta, ctxs[0].prior);
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        lp += spectrum_log_prior(state.s[k], ctxs[k], opt.likelihood_off ? 1.0 : T);
        if (lp == -kInf) return -kInf;
        if (!opt.likelihood_off) {
            lp += log_likelihood(state.s[k], ctxs[k]) / T;
        }
    }
    return lp;
}

double multi_spectrum_log_posterior(const std::vector<ModelState>& states,
                                    std::span<const FitContext> ctxs, const CondOptions& opt) {
    if (states.empty() || states.size() != ctxs.size()) {
        throw DataError("multi-spectrum evaluation: state/spectrum count mismatch");
    }
    ModelState combined;
    combined.beta = states[0].beta;
    for (const ModelState& st : states) {
        if (st.s.size() != 1) {
            throw DataError("multi-spectrum evaluation: each state must carry one spectrum");
        }
        if (st.beta != combined.beta) {
            throw DataError("multi-spectrum evaluation: beta differs across states");
        }
        combined.s.push_back(st.s[0]);
    }
    return log_posterior(combined, ctxs, opt);
}

// ---- full conditionals -----------------------------------------------------

TruncNormalSpec beta_conditional(const ModelState& state, std::span<const FitContext> ctxs,
                                 int m, const CondOptions& opt) {
    const PriorConfig& pc = ctxs[0].prior;
    const auto mm = static_cast<std::size_t>(m);
    const double lw = opt.likelihood_off ? 0.0 : 1.0 / opt.temperature;
    double prec = pc.s_abundance;
    double num = pc.s_abundance * pc.e_abundance;
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        const SpectrumState& st = state.s[k];
        const auto p = static_cast<std::size_t>(ctxs[k].p());
        double dot = 0;
        const double* wt = st.wtcols.data() + mm * p;
        for (std::size_t i = 0; i < p; ++i) dot += wt[i] * st.resid_w[i];
        dot += state.beta[mm] * st.wt_norm2[mm];
        prec += lw * st.lambda * st.wt_norm2[mm];
        num += lw * st.lambda * dot;
    }
    return {num / prec, 1.0 / prec, 0.0, kInf};
}

std::pair<double, double> theta_bounds(const SpectrumState& st, const FitContext& ctx, int jk) {
    double lo = -kInf, hi = kInf;
    const SparseColumn& col = basis_column(ctx.plan, jk);
    const double cur = st.theta[static_cast<std::size_t>(jk)];
    for (std::size_t t = 0; t < col.idx.size(); ++t) {
        const double bv = col.val[t];
        const auto i = static_cast<std::size_t>(col.idx[t]);
        const double rem = st.xi[i] - bv * cur; // xi without this coefficient
        const double bound = (st.tau[i] - rem) / bv;
        if (bv > 0) {
            lo = std::max(lo, bound);
        } else {
            hi = std::min(hi, bound);
        }
    }
    return {lo, hi};
}

TruncNormalSpec theta_conditional(const SpectrumState& st, const FitContext& ctx, int jk,
                                  const CondOptions& opt) {
    const auto j = static_cast<std::size_t>(jk);
    const double lw = opt.likelihood_off ? 0.0 : 1.0 / opt.temperature;
    const double w = st.resid_w[j] + st.theta[j]; // residual coefficient with theta_jk removed
    const double prec = st.lambda * (lw + st.psi[j]);
    const double mean = st.lambda * lw * w / prec;
    auto [lo, hi] = theta_bounds(st, ctx, jk);
    return {mean, 1.0 / prec, lo, hi};
}

GammaSpec psi_conditional(const SpectrumState& st, const FitContext& ctx, int jk,
                          const CondOptions& opt) {
    const auto j = static_cast<std::size_t>(jk);
    const PriorConfig& pc = ctx.prior;
    const int level = ctx.plan.level_index[j].level;
    const double c_scale = opt.likelihood_off ? 1.0 : opt.temperature;
    const double shape = pc.c_level(level) * c_scale + 0.5;
    const double rate = 0.5 * (pc.d_level(level) + st.lambda * st.theta[j] * st.theta[j]);
    return {shape, rate};
}

TruncNormalSpec tau_conditional(const SpectrumState& st, const FitContext& ctx, int i,
                                const CondOptions&) {
    const PriorConfig& pc = ctx.prior;
    const auto ii = static_cast<std::size_t>(i);
    return {pc.h, 1.0 / (st.lambda * pc.r), -kInf, std::min(pc.h, st.xi[ii])};
}

GammaSpec lambda_conditional(const SpectrumState& st, const FitContext& ctx,
                             const CondOptions& opt) {
    const PriorConfig& pc = ctx.prior;
    const auto p = static_cast<std::size_t>(ctx.p());
    const auto n = static_cast<std::size_t>(ctx.n());
    const double lw = opt.likelihood_off ? 0.0 : 1.0 / opt.temperature;
    double psi_theta2 = 0;
    for (std::size_t jk = 0; jk < p; ++jk) {
        psi_theta2 += st.psi[jk] * st.theta[jk] * st.theta[jk];
    }
    double tau_pen = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = st.tau[i] - pc.h;
        tau_pen += d * d;
    }
    double ss = 0;
    for (double v : st.resid_w) ss += v * v;
    const double shape = pc.a + 0.5 * (static_cast<double>(p) + static_cast<double>(n)) +
                         0.5 * lw * static_cast<double>(p);
    const double rate = 0.5 * (pc.b + psi_theta2 + pc.r * tau_pen + lw * ss);
    return {shape, rate};
}

ConditionalSpec full_conditional_params(const ModelState& state,
                                        std::span<const FitContext> ctxs, CoordFamily family,
                                        int spectrum_index, int coord, const CondOptions& opt) {
    ConditionalSpec spec;
    const auto k = static_cast<std::size_t>(spectrum_index);
    switch (family) {
        case CoordFamily::Beta:
            spec.is_gamma = false;
            spec.tn = beta_conditional(state, ctxs, coord, opt);
            break;
        case CoordFamily::Theta:
            spec.is_gamma = false;
            spec.tn = theta_conditional(state.s[k], ctxs[k], coord, opt);
            break;
        case CoordFamily::Psi:
            spec.is_gamma = true;
            spec.gamma_dist = psi_conditional(state.s[k], ctxs[k], coord, opt);
            break;
        case CoordFamily::Tau:
            spec.is_gamma = false;
            spec.tn = tau_conditional(state.s[k], ctxs[k], coord, opt);
            break;
        case CoordFamily::Lambda:
            spec.is_gamma = true;
            spec.gamma_dist = lambda_conditional(state.s[k], ctxs[k], opt);
            break;
    }
    return spec;
}

} // namespace nmrdecon
