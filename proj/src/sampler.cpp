#include "nmrdecon/sampler.hpp"
#include "nmrdecon/errors.hpp"
#include "nmrdecon/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace nmrdecon {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

double sum_sq(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return s;
}

// Log density of a normal restricted to [lo, inf). The normalizer is skipped
// when the bound is far in the lower tail, where it is zero to double precision.
double tn_lower_logpdf(double x, double mean, double sd, double lo) {
    const double z = (x - mean) / sd;
    const double a = (lo - mean) / sd;
    const double log_z = (a < -8.0) ? 0.0 : log_norm_cdf(-a);
    return -0.5 * z * z - std::log(sd) - 0.5 * kLog2Pi - log_z;
}

double normal_logpdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * kLog2Pi;
}

void adapt_record(AdaptState& a, bool accepted, const SamplerConfig& cfg) {
    if (a.frozen) return;
    ++a.batch_n;
    if (accepted) ++a.batch_accepts;
    if (a.batch_n >= cfg.adapt_batch) {
        ++a.batches;
        const double delta = std::min(cfg.adapt_cap, 1.0 / std::sqrt(static_cast<double>(a.batches)));
        const double rate = static_cast<double>(a.batch_accepts) / static_cast<double>(a.batch_n);
        a.log_step += (rate > cfg.target_accept) ? delta : -delta;
        a.batch_n = 0;
        a.batch_accepts = 0;
    }
}

void record(ChainState& chain, const char* move, bool accepted) {
    MoveStats& s = chain.stats[move];
    ++s.proposals;
    if (accepted) ++s.accepts;
}

CondOptions chain_options(const ChainState& chain, const SamplerConfig& cfg) {
    return {chain.temperature, cfg.likelihood_off};
}

// Applies a rebuilt column of metabolite m to every cache of the state.
void commit_column(SpectrumState& st, const FitContext& ctx, std::span<const double> beta, int m,
                   const ColumnProposal& col) {
    const auto n = static_cast<std::size_t>(ctx.n());
    const auto p = static_cast<std::size_t>(ctx.p());
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
    std::copy(col.tcol.begin(), col.tcol.end(),
              st.tcols.begin() + static_cast<std::ptrdiff_t>(mm * n));
    std::copy(col.wtcol.begin(), col.wtcol.end(),
              st.wtcols.begin() + static_cast<std::ptrdiff_t>(mm * p));
    st.wt_norm2[mm] = col.norm2;
}

std::vector<double> met_shifts_with(const SpectrumState& st, const FitContext& ctx, int m,
                                    int entry, double value) {
    const auto& entries = ctx.met_multiplets[static_cast<std::size_t>(m)];
    std::vector<double> sh(entries.size());
    for (std::size_t j = 0; j < entries.size(); ++j) {
        const int e = entries[j];
        sh[j] = (e == entry) ? value : st.shifts[static_cast<std::size_t>(e)];
    }
    return sh;
}

// Independent truncated-normal draw of the data-domain wavelet component given a
// mean surface; returns the draw and its full log proposal density.
struct ThetaDraw {
    std::vector<double> eta;
    double logq = 0;
};

ThetaDraw draw_theta_block(RngStream& rng, const FitContext& ctx, const SpectrumState& st,
                           std::span<const double> mean_ext, double sd) {
    const auto n = static_cast<std::size_t>(ctx.n());
    const auto p = static_cast<std::size_t>(ctx.p());
    ThetaDraw out;
    out.eta.resize(p);
    for (std::size_t i = 0; i < p; ++i) {
        if (i < n) {
            out.eta[i] = rng.truncated_normal(mean_ext[i], sd, st.tau[i], kInf);
            out.logq += tn_lower_logpdf(out.eta[i], mean_ext[i], sd, st.tau[i]);
        } else {
            out.eta[i] = mean_ext[i] + sd * rng.normal();
            out.logq += normal_logpdf(out.eta[i], mean_ext[i], sd);
        }
    }
    return out;
}

double theta_block_logq(const FitContext& ctx, const SpectrumState& st,
                        std::span<const double> eta, std::span<const double> mean_ext, double sd) {
    const auto n = static_cast<std::size_t>(ctx.n());
    const auto p = static_cast<std::size_t>(ctx.p());
    double logq = 0;
    for (std::size_t i = 0; i < p; ++i) {
        if (i < n) {
            // clamp: cached xi may sit a rounding error below tau
            logq += tn_lower_logpdf(std::max(eta[i], st.tau[i]), mean_ext[i], sd, st.tau[i]);
        } else {
            logq += normal_logpdf(eta[i], mean_ext[i], sd);
        }
    }
    return logq;
}

double psi_quadratic_delta(const SpectrumState& st, std::span<const double> theta_new) {
    double d = 0;
    for (std::size_t jk = 0; jk < st.theta.size(); ++jk) {
        d += st.psi[jk] * (theta_new[jk] * theta_new[jk] - st.theta[jk] * st.theta[jk]);
    }
    return d;
}

std::vector<double> current_eta(const SpectrumState& st, const FitContext& ctx) {
    if (ctx.p() == ctx.n()) return st.xi;
    return inverse(ctx.plan, st.theta);
}

// Shared tail of the shift-theta and copy block moves: given a candidate shift
// for multiplet `mu` and the log proposal-density correction of the shift part,
// draw the conditional theta block and run the joint accept-reject step.
bool shift_theta_block_body(ChainState& chain, std::span<const FitContext> ctxs, int spectrum,
                            int mu, double prop, double shift_logq_corr,
                            const SamplerConfig& cfg) {
    const FitContext& ctx = ctxs[static_cast<std::size_t>(spectrum)];
    SpectrumState& st = chain.model.s[static_cast<std::size_t>(spectrum)];
    const MultipletEntry& e = ctx.multiplets[static_cast<std::size_t>(mu)];
    const int m = e.metabolite;
    const auto mm = static_cast<std::size_t>(m);
    const auto n = static_cast<std::size_t>(ctx.n());
    const auto p = static_cast<std::size_t>(ctx.p());
    const double cur = st.shifts[static_cast<std::size_t>(mu)];
    const double T = chain.temperature;
    const double lw = cfg.likelihood_off ? 0.0 : 1.0 / T;

    ColumnProposal col = propose_column(ctx, m, st.gamma * std::exp(st.re_of(m)),
                                        met_shifts_with(st, ctx, m, mu, prop));

    std::vector<double> fit_d_new(n);
    const double bm = chain.model.beta[mm];
    for (std::size_t i = 0; i < n; ++i) {
        fit_d_new[i] = st.fit_d[i] + bm * (col.tcol[i] - st.tcols[mm * n + i]);
    }
    std::vector<double> mean_new(n);
    for (std::size_t i = 0; i < n; ++i) mean_new[i] = ctx.spectrum.intensities[i] - fit_d_new[i];
    std::vector<double> mean_new_ext = extend_signal(ctx.plan, mean_new);

    const double sd = std::sqrt(T / st.lambda);
    ThetaDraw draw = draw_theta_block(chain.rng, ctx, st, mean_new_ext, sd);
    std::vector<double> theta_new = forward_extended(ctx.plan, draw.eta);

    std::vector<double> fit_w_new(p), resid_new(p);
    for (std::size_t i = 0; i < p; ++i) {
        fit_w_new[i] = st.fit_w[i] + bm * (col.wtcol[i] - st.wtcols[mm * p + i]);
        resid_new[i] = ctx.wy[i] - fit_w_new[i] - theta_new[i];
    }

    // reverse proposal density of the current wavelet component
    std::vector<double> eta_cur = current_eta(st, ctx);
    std::vector<double> mean_cur(n);
    for (std::size_t i = 0; i < n; ++i) mean_cur[i] = ctx.spectrum.intensities[i] - st.fit_d[i];
    std::vector<double> mean_cur_ext = extend_signal(ctx.plan, mean_cur);
    const double logq_rev = theta_block_logq(ctx, st, eta_cur, mean_cur_ext, sd);

    double log_acc = shift_logq_corr + (logq_rev - draw.logq);
    if (!cfg.likelihood_off) {
        log_acc -= 0.5 * st.lambda * (sum_sq(resid_new) - sum_sq(st.resid_w)) / T;
    }
    log_acc -= 0.5 * st.lambda * psi_quadratic_delta(st, theta_new);
    {
        const double zn = (prop - e.prior_center) / e.prior_sd;
        const double zo = (cur - e.prior_center) / e.prior_sd;
        log_acc -= 0.5 * (zn * zn - zo * zo);
    }

    if (std::log(chain.rng.uniform()) < log_acc) {
        st.shifts[static_cast<std::size_t>(mu)] = prop;
        commit_column(st, ctx, chain.model.beta, m, col);
        st.theta = std::move(theta_new);
        st.xi.assign(draw.eta.begin(), draw.eta.begin() + static_cast<std::ptrdiff_t>(n));
        st.fit_d = std::move(fit_d_new);
        st.resid_w = std::move(resid_new);
        return true;
    }
    return false;
}

} // namespace

double anneal_temperature(long iteration, const ScheduleConfig& sched) {
    if (sched.burnin <= 0 || iteration >= sched.burnin) return 1.0;
    const double mu = sched.mu >= 0 ? sched.mu : sched.burnin / 3.0;
    const double sigma = sched.sigma > 0 ? sched.sigma : sched.burnin / 6.0;
    const double num = norm_cdf(-(static_cast<double>(iteration) - mu) / sigma);
    const double den = norm_cdf(mu / sigma);
    return 1.0 + (sched.t_start - 1.0) * num / den;
}

ChainState make_chain(std::span<const FitContext> ctxs, const SamplerConfig& cfg, int chain_index) {
    ChainState chain(RngStream::derive(cfg.seed, 1000 + static_cast<std::uint64_t>(chain_index)));
    chain.stream_id = 1000 + static_cast<std::uint64_t>(chain_index);
    chain.model = init_state(ctxs);
    const int K = cfg.chains;
    chain.ladder_factor =
        (K > 1) ? std::pow(cfg.ladder_top, static_cast<double>(chain_index) / (K - 1)) : 1.0;
    chain.temperature = anneal_temperature(0, {cfg.ladder_top, cfg.burnin}) * chain.ladder_factor;
    chain.shift_adapt.resize(ctxs.size());
    chain.width_adapt.resize(ctxs.size());
    chain.re_adapt.resize(ctxs.size());
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        chain.shift_adapt[k].assign(ctxs[k].multiplets.size(),
                                    AdaptState{std::log(cfg.init_shift_step), 0, 0, 0, false});
        chain.width_adapt[k] = AdaptState{std::log(cfg.init_logwidth_step), 0, 0, 0, false};
        chain.re_adapt[k].assign(static_cast<std::size_t>(ctxs[k].metabolite_count()),
                                 AdaptState{std::log(0.05), 0, 0, 0, false});
    }
    return chain;
}

void gibbs_sweep(ChainState& chain, std::span<const FitContext> ctxs, const SamplerConfig& cfg) {
    const CondOptions opt = chain_options(chain, cfg);
    const auto M = chain.model.beta.size();

    if (cfg.updates.beta) {
        for (std::size_t m = 0; m < M; ++m) {
            TruncNormalSpec spec = beta_conditional(chain.model, ctxs, static_cast<int>(m), opt);
            const double nv =
                chain.rng.truncated_normal(spec.mean, std::sqrt(spec.var), spec.lo, spec.hi);
            const double dv = nv - chain.model.beta[m];
            if (dv != 0.0) {
                for (std::size_t k = 0; k < ctxs.size(); ++k) {
                    SpectrumState& st = chain.model.s[k];
                    const auto p = static_cast<std::size_t>(ctxs[k].p());
                    const auto n = static_cast<std::size_t>(ctxs[k].n());
                    const double* wt = st.wtcols.data() + m * p;
                    const double* tc = st.tcols.data() + m * n;
                    for (std::size_t i = 0; i < p; ++i) {
                        st.fit_w[i] += dv * wt[i];
                        st.resid_w[i] -= dv * wt[i];
                    }
                    for (std::size_t i = 0; i < n; ++i) st.fit_d[i] += dv * tc[i];
                }
                chain.model.beta[m] = nv;
            }
        }
    }

    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        const FitContext& ctx = ctxs[k];
        SpectrumState& st = chain.model.s[k];
        const auto p = static_cast<std::size_t>(ctx.p());
        const auto n = static_cast<std::size_t>(ctx.n());

        if (cfg.updates.theta) {
            for (std::size_t jk = 0; jk < p; ++jk) {
                TruncNormalSpec spec = theta_conditional(st, ctx, static_cast<int>(jk), opt);
                if (!(spec.lo < spec.hi)) continue;
                const double nv =
                    chain.rng.truncated_normal(spec.mean, std::sqrt(spec.var), spec.lo, spec.hi);
                const double dv = nv - st.theta[jk];
                if (dv == 0.0) continue;
                st.theta[jk] = nv;
                st.resid_w[jk] -= dv;
                const SparseColumn& colb = basis_column(ctx.plan, static_cast<int>(jk));
                for (std::size_t t = 0; t < colb.idx.size(); ++t) {
                    st.xi[static_cast<std::size_t>(colb.idx[t])] += colb.val[t] * dv;
                }
            }
        }
        if (cfg.updates.psi) {
            for (std::size_t jk = 0; jk < p; ++jk) {
                GammaSpec g = psi_conditional(st, ctx, static_cast<int>(jk), opt);
                st.psi[jk] = std::max(chain.rng.gamma(g.shape, g.rate), 1e-300);
            }
        }
        if (cfg.updates.tau) {
            for (std::size_t i = 0; i < n; ++i) {
                TruncNormalSpec spec = tau_conditional(st, ctx, static_cast<int>(i), opt);
                st.tau[i] = chain.rng.truncated_normal(spec.mean, std::sqrt(spec.var), spec.lo,
                                                       spec.hi);
            }
        }
        if (cfg.updates.lambda) {
            GammaSpec g = lambda_conditional(st, ctx, opt);
            st.lambda = std::max(chain.rng.gamma(g.shape, g.rate), 1e-300);
        }
    }
}

bool mh_update_shift(ChainState& chain, std::span<const FitContext> ctxs, int spectrum, int mu,
                     const SamplerConfig& cfg) {
    const FitContext& ctx = ctxs[static_cast<std::size_t>(spectrum)];
    SpectrumState& st = chain.model.s[static_cast<std::size_t>(spectrum)];
    const MultipletEntry& e = ctx.multiplets[static_cast<std::size_t>(mu)];
    const int m = e.metabolite;
    const auto mm = static_cast<std::size_t>(m);
    const auto p = static_cast<std::size_t>(ctx.p());
    AdaptState& adapt = chain.shift_adapt[static_cast<std::size_t>(spectrum)][static_cast<std::size_t>(mu)];

    const double lo = e.prior_center - e.prior_halfwidth;
    const double hi = e.prior_center + e.prior_halfwidth;
    const double step = std::exp(adapt.log_step);
    const double cur = st.shifts[static_cast<std::size_t>(mu)];
    const double prop = chain.rng.truncated_normal(cur, step, lo, hi);

    const double logq_corr = truncated_normal_logpdf(cur, prop, step, lo, hi) -
                             truncated_normal_logpdf(prop, cur, step, lo, hi);

    ColumnProposal col = propose_column(ctx, m, st.gamma * std::exp(st.re_of(m)),
                                        met_shifts_with(st, ctx, m, mu, prop));
    double log_acc = logq_corr;
    if (!cfg.likelihood_off) {
        const double bm = chain.model.beta[mm];
        double ss_new = 0;
        for (std::size_t i = 0; i < p; ++i) {
            const double rv = st.resid_w[i] - bm * (col.wtcol[i] - st.wtcols[mm * p + i]);
            ss_new += rv * rv;
        }
        log_acc -= 0.5 * st.lambda * (ss_new - sum_sq(st.resid_w)) / chain.temperature;
    }
    {
        const double zn = (prop - e.prior_center) / e.prior_sd;
        const double zo = (cur - e.prior_center) / e.prior_sd;
        log_acc -= 0.5 * (zn * zn - zo * zo);
    }

    const bool accept = std::log(chain.rng.uniform()) < log_acc;
    if (accept) {
        st.shifts[static_cast<std::size_t>(mu)] = prop;
        commit_column(st, ctx, chain.model.beta, m, col);
    }
    adapt_record(adapt, accept, cfg);
    record(chain, "shift", accept);
    return accept;
}

namespace {

// Rebuild every template column for a candidate peak-width / random-effect
// configuration and return the implied residual sum of squares.
struct AllColumns {
    std::vector<ColumnProposal> cols;
    double ss_new = 0;
};

AllColumns propose_all_columns(const FitContext& ctx, const SpectrumState& st,
                               std::span<const double> beta, double gamma_new,
                               std::span<const double> re_new) {
    const auto M = static_cast<std::size_t>(ctx.metabolite_count());
    const auto p = static_cast<std::size_t>(ctx.p());
    AllColumns out;
    out.cols.resize(M);
    std::vector<double> fit_w_new(p, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
        const auto& entries = ctx.met_multiplets[m];
        std::vector<double> sh(entries.size());
        for (std::size_t j = 0; j < entries.size(); ++j) {
            sh[j] = st.shifts[static_cast<std::size_t>(entries[j])];
        }
        const double re = re_new.empty() ? 0.0 : re_new[m];
        out.cols[m] = propose_column(ctx, static_cast<int>(m), gamma_new * std::exp(re), sh);
        for (std::size_t i = 0; i < p; ++i) fit_w_new[i] += beta[m] * out.cols[m].wtcol[i];
    }
    for (std::size_t i = 0; i < p; ++i) {
        const double rv = ctx.wy[i] - fit_w_new[i] - st.theta[i];
        out.ss_new += rv * rv;
    }
    return out;
}

void commit_all_columns(SpectrumState& st, const FitContext& ctx, std::span<const double> beta,
                        const AllColumns& ac) {
    for (std::size_t m = 0; m < ac.cols.size(); ++m) {
        commit_column(st, ctx, beta, static_cast<int>(m), ac.cols[m]);
    }
}

} // namespace

bool mh_update_logwidth(ChainState& chain, std::span<const FitContext> ctxs, int spectrum,
                        const SamplerConfig& cfg) {
    const FitContext& ctx = ctxs[static_cast<std::size_t>(spectrum)];
    SpectrumState& st = chain.model.s[static_cast<std::size_t>(spectrum)];
    AdaptState& adapt = chain.width_adapt[static_cast<std::size_t>(spectrum)];

    const double step = std::exp(adapt.log_step);
    const double lg = std::log(st.gamma);
    const double lg_new = lg + step * chain.rng.normal();
    const double gamma_new = std::exp(lg_new);

    AllColumns ac = propose_all_columns(ctx, st, chain.model.beta, gamma_new, st.re);
    double log_acc = 0;
    if (!cfg.likelihood_off) {
        log_acc -= 0.5 * st.lambda * (ac.ss_new - sum_sq(st.resid_w)) / chain.temperature;
    }
    const double mu = ctx.prior.gamma_log_location(ctx.spectrum.grid.spectrometer_frequency_mhz);
    const double s2 = PriorConfig::gamma_log_scale2();
    log_acc += (-lg_new - 0.5 * (lg_new - mu) * (lg_new - mu) / s2) -
               (-lg - 0.5 * (lg - mu) * (lg - mu) / s2);
    log_acc += lg_new - lg; // symmetric-in-log proposal on a gamma-space target

    const bool accept = std::log(chain.rng.uniform()) < log_acc;
    if (accept) {
        st.gamma = gamma_new;
        commit_all_columns(st, ctx, chain.model.beta, ac);
    }
    adapt_record(adapt, accept, cfg);
    record(chain, "width", accept);
    return accept;
}

bool mh_update_re(ChainState& chain, std::span<const FitContext> ctxs, int spectrum, int m,
                  const SamplerConfig& cfg) {
    const FitContext& ctx = ctxs[static_cast<std::size_t>(spectrum)];
    SpectrumState& st = chain.model.s[static_cast<std::size_t>(spectrum)];
    if (st.re.empty()) return false;
    AdaptState& adapt = chain.re_adapt[static_cast<std::size_t>(spectrum)][static_cast<std::size_t>(m)];
    const auto mm = static_cast<std::size_t>(m);
    const auto p = static_cast<std::size_t>(ctx.p());

    const double step = std::exp(adapt.log_step);
    const double cur = st.re[mm];
    const double prop = cur + step * chain.rng.normal();

    const auto& entries = ctx.met_multiplets[mm];
    std::vector<double> sh(entries.size());
    for (std::size_t j = 0; j < entries.size(); ++j) {
        sh[j] = st.shifts[static_cast<std::size_t>(entries[j])];
    }
    ColumnProposal col = propose_column(ctx, m, st.gamma * std::exp(prop), sh);

    double log_acc = 0;
    if (!cfg.likelihood_off) {
        const double bm = chain.model.beta[mm];
        double ss_new = 0;
        for (std::size_t i = 0; i < p; ++i) {
            const double rv = st.resid_w[i] - bm * (col.wtcol[i] - st.wtcols[mm * p + i]);
            ss_new += rv * rv;
        }
        log_acc -= 0.5 * st.lambda * (ss_new - sum_sq(st.resid_w)) / chain.temperature;
    }
    const double sd = ctx.prior.re_sd;
    log_acc -= 0.5 * (prop * prop - cur * cur) / (sd * sd);

    const bool accept = std::log(chain.rng.uniform()) < log_acc;
    if (accept) {
        st.re[mm] = prop;
        commit_column(st, ctx, chain.model.beta, m, col);
    }
    adapt_record(adapt, accept, cfg);
    record(chain, "re", accept);
    return accept;
}

bool block_update_shift_theta(ChainState& chain, std::span<const FitContext> ctxs, int spectrum,
                              int mu, const SamplerConfig& cfg) {
    const FitContext& ctx = ctxs[static_cast<std::size_t>(spectrum)];
    SpectrumState& st = chain.model.s[static_cast<std::size_t>(spectrum)];
    const MultipletEntry& e = ctx.multiplets[static_cast<std::size_t>(mu)];
    const double lo = e.prior_center - e.prior_halfwidth;
    const double hi = e.prior_center + e.prior_halfwidth;
    const double cur = st.shifts[static_cast<std::size_t>(mu)];
    const double prop = chain.rng.truncated_normal(cur, cfg.block_shift_sd, lo, hi);
    const double logq_corr = truncated_normal_logpdf(cur, prop, cfg.block_shift_sd, lo, hi) -
                             truncated_normal_logpdf(prop, cur, cfg.block_shift_sd, lo, hi);
    const bool accept = shift_theta_block_body(chain, ctxs, spectrum, mu, prop, logq_corr, cfg);
    record(chain, "block_shift", accept);
    return accept;
}

bool block_update_beta_theta(ChainState& chain, std::span<const FitContext> ctxs, int m,
                             const SamplerConfig& cfg) {
    const auto mm = static_cast<std::size_t>(m);
    const double T = chain.temperature;
    const double lw = cfg.likelihood_off ? 0.0 : 1.0 / T;
    const PriorConfig& pc = ctxs[0].prior;
    const double cur = chain.model.beta[mm];

    // greedy center: conditional mode at theta = 0, capped by feasibility of
    // y - T beta >= tau over the template support
    double prec = pc.s_abundance;
    double num = pc.s_abundance * pc.e_abundance;
    double feasible_max = kInf;
    bool all_zero = true;
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        const FitContext& ctx = ctxs[k];
        const SpectrumState& st = chain.model.s[k];
        const auto p = static_cast<std::size_t>(ctx.p());
        const auto n = static_cast<std::size_t>(ctx.n());
        const double* wt = st.wtcols.data() + mm * p;
        const double* tc = st.tcols.data() + mm * n;
        double dot = 0;
        for (std::size_t i = 0; i < p; ++i) {
            dot += wt[i] * (ctx.wy[i] - st.fit_w[i]);
        }
        dot += cur * st.wt_norm2[mm];
        num += lw * st.lambda * dot;
        prec += lw * st.lambda * st.wt_norm2[mm];
        double colmax = 0;
        for (std::size_t i = 0; i < n; ++i) colmax = std::max(colmax, tc[i]);
        if (colmax > 0) all_zero = false;
        const double thresh = 1e-6 * colmax;
        for (std::size_t i = 0; i < n; ++i) {
            if (tc[i] > thresh && colmax > 0) {
                const double avail =
                    ctx.spectrum.intensities[i] - (st.fit_d[i] - cur * tc[i]) - st.tau[i];
                feasible_max = std::min(feasible_max, avail / tc[i]);
            }
        }
    }
    if (all_zero) {
        record(chain, "block_beta", true);
        return true; // nothing to update; counts as an accepted null move
    }
    double center = std::min(num / prec, feasible_max);
    if (!(center > 0)) center = 0;
    const double scale = cfg.greedy_scale_mult * center + cfg.greedy_scale_floor;

    const double f0 = std::atan((0.0 - center) / scale) / std::numbers::pi + 0.5;
    const double u = f0 + chain.rng.uniform() * (1.0 - f0);
    double prop = center + scale * std::tan(std::numbers::pi * (u - 0.5));
    prop = std::max(prop, 0.0);

    double log_acc = truncated_cauchy_logpdf(cur, center, scale, 0.0, kInf) -
                     truncated_cauchy_logpdf(prop, center, scale, 0.0, kInf);
    {
        const double dn = prop - pc.e_abundance;
        const double dc = cur - pc.e_abundance;
        log_acc -= 0.5 * pc.s_abundance * (dn * dn - dc * dc);
    }

    // conditional theta proposals, one per spectrum
    struct PerSpectrum {
        std::vector<double> eta, theta_new, resid_new, fit_d_new, fit_w_new;
    };
    std::vector<PerSpectrum> props(ctxs.size());
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        const FitContext& ctx = ctxs[k];
        SpectrumState& st = chain.model.s[k];
        const auto p = static_cast<std::size_t>(ctx.p());
        const auto n = static_cast<std::size_t>(ctx.n());
        const double* wt = st.wtcols.data() + mm * p;
        const double* tc = st.tcols.data() + mm * n;
        PerSpectrum& ps = props[k];

        ps.fit_d_new.resize(n);
        std::vector<double> mean_new(n);
        for (std::size_t i = 0; i < n; ++i) {
            ps.fit_d_new[i] = st.fit_d[i] + (prop - cur) * tc[i];
            mean_new[i] = ctx.spectrum.intensities[i] - ps.fit_d_new[i];
        }
        std::vector<double> mean_new_ext = extend_signal(ctx.plan, mean_new);
        const double sd = std::sqrt(T / st.lambda);
        ThetaDraw draw = draw_theta_block(chain.rng, ctx, st, mean_new_ext, sd);
        ps.eta = std::move(draw.eta);
        ps.theta_new = forward_extended(ctx.plan, ps.eta);
        ps.fit_w_new.resize(p);
        ps.resid_new.resize(p);
        for (std::size_t i = 0; i < p; ++i) {
            ps.fit_w_new[i] = st.fit_w[i] + (prop - cur) * wt[i];
            ps.resid_new[i] = ctx.wy[i] - ps.fit_w_new[i] - ps.theta_new[i];
        }

        std::vector<double> eta_cur = current_eta(st, ctx);
        std::vector<double> mean_cur(n);
        for (std::size_t i = 0; i < n; ++i) {
            mean_cur[i] = ctx.spectrum.intensities[i] - st.fit_d[i];
        }
        std::vector<double> mean_cur_ext = extend_signal(ctx.plan, mean_cur);
        log_acc += theta_block_logq(ctx, st, eta_cur, mean_cur_ext, sd) - draw.logq;
        if (!cfg.likelihood_off) {
            log_acc -= 0.5 * st.lambda * (sum_sq(ps.resid_new) - sum_sq(st.resid_w)) / T;
        }
        log_acc -= 0.5 * st.lambda * psi_quadratic_delta(st, ps.theta_new);
    }

    const bool accept = std::log(chain.rng.uniform()) < log_acc;
    if (accept) {
        chain.model.beta[mm] = prop;
        for (std::size_t k = 0; k < ctxs.size(); ++k) {
            SpectrumState& st = chain.model.s[k];
            const auto n = static_cast<std::size_t>(ctxs[k].n());
            PerSpectrum& ps = props[k];
            st.theta = std::move(ps.theta_new);
            st.xi.assign(ps.eta.begin(), ps.eta.begin() + static_cast<std::ptrdiff_t>(n));
            st.fit_d = std::move(ps.fit_d_new);
            st.fit_w = std::move(ps.fit_w_new);
            st.resid_w = std::move(ps.resid_new);
        }
    }
    record(chain, "block_beta", accept);
    return accept;
}

bool copy_move(ChainState& chain, std::span<const FitContext> ctxs,
               const std::vector<std::vector<double>>& shift_snapshot, int self_index,
               int spectrum, int mu, const SamplerConfig& cfg) {
    const int chains = static_cast<int>(shift_snapshot.size());
    if (chains < 2) return false;
    int comp = chain.rng.uniform_int(chains - 1);
    if (comp >= self_index) ++comp;

    std::size_t flat = 0;
    for (int k = 0; k < spectrum; ++k) flat += ctxs[static_cast<std::size_t>(k)].multiplets.size();
    flat += static_cast<std::size_t>(mu);
    const double center = shift_snapshot[static_cast<std::size_t>(comp)][flat];

    const FitContext& ctx = ctxs[static_cast<std::size_t>(spectrum)];
    const MultipletEntry& e = ctx.multiplets[static_cast<std::size_t>(mu)];
    const double lo = e.prior_center - e.prior_halfwidth;
    const double hi = e.prior_center + e.prior_halfwidth;
    const double cur = chain.model.s[static_cast<std::size_t>(spectrum)].shifts[static_cast<std::size_t>(mu)];

    const double prop = chain.rng.cauchy(center, cfg.copy_scale_ppm);
    if (prop < lo || prop > hi) {
        record(chain, "copy", false); // outside the prior support: density zero
        return false;
    }
    // the truncation normalizer depends only on the (unchanged) complementary value
    const double zc = (cur - center) / cfg.copy_scale_ppm;
    const double zp = (prop - center) / cfg.copy_scale_ppm;
    const double logq_corr = -std::log1p(zc * zc) + std::log1p(zp * zp);

    const bool accept =
        shift_theta_block_body(chain, ctxs, spectrum, mu, prop, logq_corr, cfg);
    record(chain, "copy", accept);
    return accept;
}

bool exchange_move(std::vector<ChainState>& chains, std::span<const FitContext> ctxs,
                   int pair_index, RngStream& pop_rng, const SamplerConfig& cfg) {
    ChainState& a = chains[static_cast<std::size_t>(pair_index)];
    ChainState& b = chains[static_cast<std::size_t>(pair_index) + 1];
    const CondOptions oa{a.temperature, cfg.likelihood_off};
    const CondOptions ob{b.temperature, cfg.likelihood_off};
    const double laa = log_posterior(a.model, ctxs, oa);
    const double lab = log_posterior(b.model, ctxs, oa);
    const double lba = log_posterior(a.model, ctxs, ob);
    const double lbb = log_posterior(b.model, ctxs, ob);
    const double log_acc = (lab + lba) - (laa + lbb);
    const bool accept = std::log(pop_rng.uniform()) < log_acc;
    if (accept) std::swap(a.model, b.model);
    return accept;
}

void chain_guard(const ChainState& chain, std::span<const FitContext> ctxs, long iteration) {
    auto dump = [&](const std::string& what) {
        std::ostringstream os;
        os << "chain fault at iteration " << iteration << " (stream " << chain.stream_id
           << ", T=" << chain.temperature << "): " << what << "; state:";
        for (std::size_t k = 0; k < chain.model.s.size(); ++k) {
            const SpectrumState& st = chain.model.s[k];
            os << " [spectrum " << k << ": lambda=" << st.lambda << " gamma=" << st.gamma << "]";
        }
        os << " beta=[";
        for (double b : chain.model.beta) os << " " << b;
        os << " ]";
        throw NumericError(os.str());
    };
    for (double b : chain.model.beta) {
        if (!std::isfinite(b) || b < 0) dump("nonfinite or negative concentration");
    }
    for (const SpectrumState& st : chain.model.s) {
        if (!std::isfinite(st.lambda) || st.lambda <= 0) dump("nonfinite precision");
        if (!std::isfinite(st.gamma) || st.gamma <= 0) dump("nonfinite peak-width");
    }
    const double lp = log_posterior(chain.model, ctxs, {1.0, false});
    if (std::isnan(lp) || lp == kInf || lp == -kInf) dump("nonfinite log posterior");
}

RunResult run(std::span<const FitContext> ctxs, const SamplerConfig& cfg) {
    if (ctxs.empty()) throw ConfigError("run: no spectra");
    if (cfg.chains < 1) throw ConfigError("run: need at least one chain");
    if (cfg.iters <= cfg.burnin || cfg.burnin < 0) {
        throw ConfigError("run: iterations must exceed the burn-in");
    }
    if (cfg.thin < 1) throw ConfigError("run: thinning must be at least one");

    const int K = cfg.chains;
    std::vector<ChainState> chains;
    chains.reserve(static_cast<std::size_t>(K));
    for (int c = 0; c < K; ++c) chains.push_back(make_chain(ctxs, cfg, c));
    RngStream pop_rng = RngStream::derive(cfg.seed, 999);

    const auto M = chains[0].model.beta.size();
    const bool multi = ctxs.size() > 1;

    SampleLog log;
    log.iters = cfg.iters;
    log.burnin = cfg.burnin;
    log.thin = cfg.thin;
    log.columns.push_back("iteration");
    for (std::size_t m = 0; m < M; ++m) {
        log.columns.push_back("beta_" + ctxs[0].catalog->templates[m].name);
    }
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        const std::string sfx = multi ? "_s" + std::to_string(k) : "";
        for (std::size_t j = 0; j < ctxs[k].multiplets.size(); ++j) {
            const MultipletEntry& e = ctxs[k].multiplets[j];
            int u = 0;
            for (int idx : ctxs[k].met_multiplets[static_cast<std::size_t>(e.metabolite)]) {
                if (idx == static_cast<int>(j)) break;
                ++u;
            }
            log.columns.push_back("shift" + sfx + "_" +
                                  ctxs[k].catalog->templates[static_cast<std::size_t>(e.metabolite)].name +
                                  "_" + std::to_string(u));
        }
    }
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        const std::string sfx = multi ? "_s" + std::to_string(k) : "";
        log.columns.push_back("gamma" + sfx);
    }
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        const std::string sfx = multi ? "_s" + std::to_string(k) : "";
        log.columns.push_back("lambda" + sfx);
    }
    log.columns.push_back("log_posterior");

    PosteriorSummary summary;
    summary.mean_xi.resize(ctxs.size());
    summary.mean_re.resize(ctxs.size());
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        summary.mean_xi[k].assign(static_cast<std::size_t>(ctxs[k].n()), 0.0);
        if (ctxs[0].prior.random_effects) summary.mean_re[k].assign(M, 0.0);
    }
    summary.mean_gamma.assign(ctxs.size(), 0.0);
    summary.mean_lambda.assign(ctxs.size(), 0.0);
    summary.mean_beta.assign(M, 0.0);
    summary.mean_shifts.resize(ctxs.size());
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        summary.mean_shifts[k].assign(ctxs[k].multiplets.size(), 0.0);
    }
    long retained = 0;

    const ScheduleConfig sched{cfg.ladder_top, cfg.burnin, -1.0, -1.0};

    for (long it = 0; it < cfg.iters; ++it) {
        const double anneal = anneal_temperature(it, sched);
        for (auto& chain : chains) chain.temperature = anneal * chain.ladder_factor;
        if (it == cfg.burnin) {
            for (auto& chain : chains) {
                for (auto& v : chain.shift_adapt) {
                    for (auto& a : v) a.frozen = true;
                }
                for (auto& a : chain.width_adapt) a.frozen = true;
                for (auto& v : chain.re_adapt) {
                    for (auto& a : v) a.frozen = true;
                }
            }
        }

#pragma omp parallel for schedule(static) if (K > 1)
        for (int c = 0; c < K; ++c) {
            ChainState& chain = chains[static_cast<std::size_t>(c)];
            gibbs_sweep(chain, ctxs, cfg);
            if (cfg.updates.shifts) {
                for (std::size_t k = 0; k < ctxs.size(); ++k) {
                    for (std::size_t mu = 0; mu < ctxs[k].multiplets.size(); ++mu) {
                        mh_update_shift(chain, ctxs, static_cast<int>(k), static_cast<int>(mu), cfg);
                    }
                }
            }
            if (cfg.updates.width) {
                for (std::size_t k = 0; k < ctxs.size(); ++k) {
                    mh_update_logwidth(chain, ctxs, static_cast<int>(k), cfg);
                }
            }
            if (cfg.updates.re && ctxs[0].prior.random_effects) {
                for (std::size_t k = 0; k < ctxs.size(); ++k) {
                    for (std::size_t m = 0; m < M; ++m) {
                        mh_update_re(chain, ctxs, static_cast<int>(k), static_cast<int>(m), cfg);
                    }
                }
            }
            if (cfg.updates.block_shift) {
                for (std::size_t k = 0; k < ctxs.size(); ++k) {
                    for (std::size_t mu = 0; mu < ctxs[k].multiplets.size(); ++mu) {
                        block_update_shift_theta(chain, ctxs, static_cast<int>(k),
                                                 static_cast<int>(mu), cfg);
                    }
                }
            }
            if (cfg.updates.block_beta) {
                for (std::size_t m = 0; m < M; ++m) {
                    block_update_beta_theta(chain, ctxs, static_cast<int>(m), cfg);
                }
            }
        }

        if (K >= 2 && cfg.updates.copy_moves) {
            std::vector<std::vector<double>> snapshot(static_cast<std::size_t>(K));
            for (int c = 0; c < K; ++c) {
                for (const SpectrumState& st : chains[static_cast<std::size_t>(c)].model.s) {
                    snapshot[static_cast<std::size_t>(c)].insert(
                        snapshot[static_cast<std::size_t>(c)].end(), st.shifts.begin(),
                        st.shifts.end());
                }
            }
#pragma omp parallel for schedule(static)
            for (int c = 0; c < K; ++c) {
                ChainState& chain = chains[static_cast<std::size_t>(c)];
                for (std::size_t k = 0; k < ctxs.size(); ++k) {
                    for (std::size_t mu = 0; mu < ctxs[k].multiplets.size(); ++mu) {
                        copy_move(chain, ctxs, snapshot, c, static_cast<int>(k),
                                  static_cast<int>(mu), cfg);
                    }
                }
            }
        }

        if (K >= 2 && cfg.updates.exchange) {
            for (int j = 0; j < K - 1; ++j) {
                const bool acc = exchange_move(chains, ctxs, j, pop_rng, cfg);
                MoveStats& s = chains[0].stats["exchange"];
                ++s.proposals;
                if (acc) ++s.accepts;
            }
        }

        if (cfg.revalidate_every > 0 && (it + 1) % cfg.revalidate_every == 0) {
            for (auto& chain : chains) {
                for (std::size_t k = 0; k < ctxs.size(); ++k) {
                    rebuild_spectrum_caches(chain.model.s[k], ctxs[k], chain.model.beta);
                }
            }
        }

        const double lp0 = log_posterior(chains[0].model, ctxs, {1.0, cfg.likelihood_off});
        log.logpost_trace.push_back(lp0);
        if (!std::isfinite(lp0) && it >= cfg.burnin) {
            chain_guard(chains[0], ctxs, it);
        }

        if (it >= cfg.burnin && (it - cfg.burnin + 1) % cfg.thin == 0) {
            const ModelState& st0 = chains[0].model;
            std::vector<double> row;
            row.reserve(log.columns.size());
            row.push_back(static_cast<double>(it));
            for (std::size_t m = 0; m < M; ++m) row.push_back(st0.beta[m]);
            for (std::size_t k = 0; k < ctxs.size(); ++k) {
                for (double sh : st0.s[k].shifts) row.push_back(sh);
            }
            for (std::size_t k = 0; k < ctxs.size(); ++k) row.push_back(st0.s[k].gamma);
            for (std::size_t k = 0; k < ctxs.size(); ++k) row.push_back(st0.s[k].lambda);
            row.push_back(lp0);
            log.draws.push_back(std::move(row));

            ++retained;
            for (std::size_t m = 0; m < M; ++m) summary.mean_beta[m] += st0.beta[m];
            for (std::size_t k = 0; k < ctxs.size(); ++k) {
                const SpectrumState& st = st0.s[k];
                for (std::size_t i = 0; i < st.xi.size(); ++i) summary.mean_xi[k][i] += st.xi[i];
                summary.mean_gamma[k] += st.gamma;
                summary.mean_lambda[k] += st.lambda;
                for (std::size_t j = 0; j < st.shifts.size(); ++j) {
                    summary.mean_shifts[k][j] += st.shifts[j];
                }
                if (!summary.mean_re[k].empty() && !st.re.empty()) {
                    for (std::size_t m = 0; m < M; ++m) summary.mean_re[k][m] += st.re[m];
                }
            }
        }
    }

    if (retained > 0) {
        const double inv = 1.0 / static_cast<double>(retained);
        for (double& v : summary.mean_beta) v *= inv;
        for (std::size_t k = 0; k < ctxs.size(); ++k) {
            for (double& v : summary.mean_xi[k]) v *= inv;
            summary.mean_gamma[k] *= inv;
            summary.mean_lambda[k] *= inv;
            for (double& v : summary.mean_shifts[k]) v *= inv;
            for (double& v : summary.mean_re[k]) v *= inv;
        }
    }

    // per-metabolite and per-shift posterior summaries from the retained draws
    const std::size_t rows = log.draws.size();
    auto column_values = [&](std::size_t col) {
        std::vector<double> v(rows);
        for (std::size_t r = 0; r < rows; ++r) v[r] = log.draws[r][col];
        return v;
    };
    for (std::size_t m = 0; m < M; ++m) {
        std::vector<double> v = column_values(1 + m);
        MetaboliteSummary ms;
        ms.name = ctxs[0].catalog->templates[m].name;
        ms.mean = mean_of(v);
        ms.sd = sd_of(v);
        ms.q025 = quantile_of(v, 0.025);
        ms.q975 = quantile_of(v, 0.975);
        ms.ess = effective_sample_size(v);
        summary.metabolites.push_back(ms);
    }
    summary.shifts.resize(ctxs.size());
    std::size_t col = 1 + M;
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        for (std::size_t j = 0; j < ctxs[k].multiplets.size(); ++j, ++col) {
            std::vector<double> v = column_values(col);
            ShiftSummary ss;
            ss.metabolite = ctxs[k].multiplets[j].metabolite;
            ss.entry = static_cast<int>(j);
            ss.prior_center = ctxs[k].multiplets[j].prior_center;
            ss.mean = mean_of(v);
            ss.sd = sd_of(v);
            ss.q025 = quantile_of(v, 0.025);
            ss.q975 = quantile_of(v, 0.975);
            summary.shifts[k].push_back(ss);
        }
    }

    for (int c = 0; c < K; ++c) {
        for (const auto& [name, stats] : chains[static_cast<std::size_t>(c)].stats) {
            log.move_stats.emplace_back("chain" + std::to_string(c) + "/" + name, stats);
        }
    }

    RunResult result;
    result.log = std::move(log);
    result.summary = std::move(summary);
    return result;
}

} // namespace nmrdecon
