#pragma once

#include "nmrdecon/model.hpp"
#include "nmrdecon/rng.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace nmrdecon {

struct ScheduleConfig {
    double t_start = 32.0;
    long burnin = 3000;
    double mu = -1.0;    // default burnin / 3
    double sigma = -1.0; // default burnin / 6
};

/// Cooling along the complement of a Gaussian cdf; exactly 1 from `burnin` on.
double anneal_temperature(long iteration, const ScheduleConfig& sched);

struct UpdateToggles {
    bool beta = true, theta = true, psi = true, tau = true, lambda = true;
    bool shifts = true, width = true, re = true;
    bool block_shift = true, block_beta = true;
    bool copy_moves = true, exchange = true;
};

struct SamplerConfig {
    int chains = 1;
    long iters = 5000;
    long burnin = 3000;
    int thin = 1;
    std::uint64_t seed = 1;

    double ladder_top = 32.0; // top ladder temperature; also the annealing start

    double block_shift_sd = 0.005; // ppm, fixed variance of the block shift proposal
    double greedy_scale_mult = 0.2;
    double greedy_scale_floor = 1e-4;
    double copy_scale_ppm = 3.0;

    int adapt_batch = 50;
    double adapt_cap = 0.01;
    double target_accept = 0.44;
    double init_shift_step = 0.005; // ppm
    double init_logwidth_step = 0.1;

    int revalidate_every = 500;
    bool likelihood_off = false; // diagnostic: target the prior alone
    UpdateToggles updates;
};

struct AdaptState {
    double log_step = 0;
    long batch_accepts = 0;
    long batch_n = 0;
    long batches = 0;
    bool frozen = false;
};

struct MoveStats {
    long long proposals = 0;
    long long accepts = 0;
    double rate() const { return proposals > 0 ? static_cast<double>(accepts) / proposals : 0.0; }
};

struct ChainState {
    ModelState model;
    double temperature = 1.0;
    double ladder_factor = 1.0;
    std::uint64_t stream_id = 0;
    RngStream rng;
    std::vector<std::vector<AdaptState>> shift_adapt; // spectrum -> multiplet
    std::vector<AdaptState> width_adapt;              // spectrum
    std::vector<std::vector<AdaptState>> re_adapt;    // spectrum -> metabolite
    std::map<std::string, MoveStats> stats;

    explicit ChainState(RngStream r) : rng(r) {}
};

struct SampleLog {
    std::vector<std::string> columns;       // names of the draw fields
    std::vector<std::vector<double>> draws; // one row per retained draw
    std::vector<double> logpost_trace;      // untempered chain-0 log posterior, every iteration
    std::vector<std::pair<std::string, MoveStats>> move_stats; // "chainIdx/move" -> stats
    long iters = 0, burnin = 0;
    int thin = 1;
};

struct MetaboliteSummary {
    std::string name;
    double mean = 0, sd = 0, q025 = 0, q975 = 0, ess = 0;
};

struct ShiftSummary {
    int metabolite = 0;
    int entry = 0; // index into FitContext::multiplets
    double prior_center = 0;
    double mean = 0, sd = 0, q025 = 0, q975 = 0;
};

struct PosteriorSummary {
    std::vector<MetaboliteSummary> metabolites;
    std::vector<std::vector<ShiftSummary>> shifts; // per spectrum
    std::vector<std::vector<double>> mean_xi;      // per spectrum, observed grid
    std::vector<double> mean_gamma;                // per spectrum
    std::vector<std::vector<double>> mean_re;      // per spectrum
    std::vector<std::vector<double>> mean_shifts;  // per spectrum
    std::vector<double> mean_beta;
    std::vector<double> mean_lambda; // per spectrum
};

struct RunResult {
    SampleLog log;
    PosteriorSummary summary;
};

/// Full population MCMC over one or more spectra sharing beta. Deterministic
/// given the seed; results do not depend on the OpenMP worker count.
RunResult run(std::span<const FitContext> ctxs, const SamplerConfig& cfg);

// Individual kernels, exposed for verification.
ChainState make_chain(std::span<const FitContext> ctxs, const SamplerConfig& cfg, int chain_index);
void gibbs_sweep(ChainState& chain, std::span<const FitContext> ctxs, const SamplerConfig& cfg);
bool mh_update_shift(ChainState& chain, std::span<const FitContext> ctxs, int spectrum, int mu,
                     const SamplerConfig& cfg);
bool mh_update_logwidth(ChainState& chain, std::span<const FitContext> ctxs, int spectrum,
                        const SamplerConfig& cfg);
bool mh_update_re(ChainState& chain, std::span<const FitContext> ctxs, int spectrum, int m,
                  const SamplerConfig& cfg);
bool block_update_shift_theta(ChainState& chain, std::span<const FitContext> ctxs, int spectrum,
                              int mu, const SamplerConfig& cfg);
bool block_update_beta_theta(ChainState& chain, std::span<const FitContext> ctxs, int m,
                             const SamplerConfig& cfg);
bool copy_move(ChainState& chain, std::span<const FitContext> ctxs,
               const std::vector<std::vector<double>>& shift_snapshot, int self_index,
               int spectrum, int mu, const SamplerConfig& cfg);
bool exchange_move(std::vector<ChainState>& chains, std::span<const FitContext> ctxs,
                   int pair_index, RngStream& pop_rng, const SamplerConfig& cfg);

/// Throws NumericError with a state dump if the chain left the finite regime.
void chain_guard(const ChainState& chain, std::span<const FitContext> ctxs, long iteration);

} // namespace nmrdecon
