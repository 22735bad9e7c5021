#include "nmrdecon/wavelet.hpp"
#include "nmrdecon/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace nmrdecon {

namespace {

// Daubechies least-asymmetric filter with 6 vanishing moments, obtained by
// spectral factorization of the order-6 Daubechies polynomial with the
// minimum-phase-deviation root selection. High-pass moments 0..5 vanish.
constexpr std::array<double, 12> kSym6Lo = {
    0.015404109327044824,  0.0034907120842221625, -0.11799011114852003,
    -0.048311742585698055, 0.49105594192797373,   0.78764114102865100,
    0.33792942172816583,   -0.072637522786376583, -0.021060292512370848,
    0.044724901770781385,  0.0017677118642540077, -0.0078007083250323804,
};

constexpr std::array<double, 12> make_highpass() {
    std::array<double, 12> g{};
    for (std::size_t t = 0; t < 12; ++t) {
        const double sign = (t % 2 == 0) ? 1.0 : -1.0;
        g[t] = sign * kSym6Lo[11 - t];
    }
    return g;
}

constexpr std::array<double, 12> kSym6Hi = make_highpass();
constexpr int kTaps = 12;

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

// One analysis split of s[0..L) into approx a[0..L/2) and detail d[0..L/2),
// periodized.
void analysis_step(std::span<const double> s, int L, std::span<double> a, std::span<double> d) {
    const int half = L / 2;
    for (int k = 0; k < half; ++k) {
        double va = 0, vd = 0;
        int base = 2 * k;
        for (int t = 0; t < kTaps; ++t) {
            int i = base + t;
            if (i >= L) i -= L;
            if (i >= L) i -= L; // L may be shorter than the filter
            va += kSym6Lo[static_cast<std::size_t>(t)] * s[static_cast<std::size_t>(i)];
            vd += kSym6Hi[static_cast<std::size_t>(t)] * s[static_cast<std::size_t>(i)];
        }
        a[static_cast<std::size_t>(k)] = va;
        d[static_cast<std::size_t>(k)] = vd;
    }
}

// Adjoint of analysis_step: scatter a and d back into s[0..L).
void synthesis_step(std::span<const double> a, std::span<const double> d, int L,
                    std::span<double> s) {
    std::fill(s.begin(), s.begin() + L, 0.0);
    const int half = L / 2;
    for (int k = 0; k < half; ++k) {
        const double va = a[static_cast<std::size_t>(k)];
        const double vd = d[static_cast<std::size_t>(k)];
        int base = 2 * k;
        for (int t = 0; t < kTaps; ++t) {
            int i = base + t;
            if (i >= L) i -= L;
            if (i >= L) i -= L;
            s[static_cast<std::size_t>(i)] += va * kSym6Lo[static_cast<std::size_t>(t)] +
                                              vd * kSym6Hi[static_cast<std::size_t>(t)];
        }
    }
}

// Inverse transform of a coefficient vector whose content above `from_level`
// reconstructions is already known to be zero. from_level counts decomposition
// splits, 1 = finest.
void inverse_partial(std::span<double> buf, int p, int levels, int from_level,
                     std::vector<double>& scratch) {
    for (int l = std::min(from_level, levels); l >= 1; --l) {
        const int L = p >> (l - 1);
        scratch.resize(static_cast<std::size_t>(L));
        synthesis_step(buf.subspan(0, static_cast<std::size_t>(L / 2)),
                       buf.subspan(static_cast<std::size_t>(L / 2), static_cast<std::size_t>(L / 2)),
                       L, scratch);
        std::copy(scratch.begin(), scratch.begin() + L, buf.begin());
    }
}

} // namespace

std::span<const double, 12> sym6_lowpass() { return kSym6Lo; }
std::span<const double, 12> sym6_highpass() { return kSym6Hi; }

WaveletPlan make_plan(int n, int levels, ExtensionPolicy extension) {
    if (n < 2 * kTaps) {
        std::ostringstream os;
        os << "wavelet plan error: data length " << n << " is below the 2x filter-length margin "
           << 2 * kTaps;
        throw DataError(os.str());
    }
    int p = next_pow2(n);
    if (extension == ExtensionPolicy::Padded) p *= 2;
    const int log2p = std::countr_zero(static_cast<unsigned>(p));
    if (levels < 0) levels = std::max(1, log2p - 3);
    if (levels < 1 || levels > log2p - 2) {
        std::ostringstream os;
        os << "wavelet plan error: depth " << levels << " outside [1, " << log2p - 2
           << "] for p = " << p;
        throw DataError(os.str());
    }

    WaveletPlan plan;
    plan.n = n;
    plan.p = p;
    plan.levels = levels;
    plan.extension = extension;

    plan.level_index.resize(static_cast<std::size_t>(p));
    const int approx_len = p >> levels;
    for (int i = 0; i < approx_len; ++i) {
        plan.level_index[static_cast<std::size_t>(i)] = {0, i};
    }
    for (int l = levels; l >= 1; --l) {
        const int start = p >> l;
        const int len = start;
        const int band = levels - l + 1; // 1 = coarsest detail
        for (int k = 0; k < len; ++k) {
            plan.level_index[static_cast<std::size_t>(start + k)] = {band, k};
        }
    }

    // Precompute the inverse columns restricted to the observed grid.
    plan.basis.resize(static_cast<std::size_t>(p));
#pragma omp parallel
    {
        std::vector<double> buf(static_cast<std::size_t>(p));
        std::vector<double> scratch;
#pragma omp for schedule(dynamic, 16)
        for (int jk = 0; jk < p; ++jk) {
            std::fill(buf.begin(), buf.end(), 0.0);
            buf[static_cast<std::size_t>(jk)] = 1.0;
            const int band = plan.level_index[static_cast<std::size_t>(jk)].level;
            const int from_level = (band == 0) ? levels : levels - band + 1;
            inverse_partial(buf, p, levels, from_level, scratch);
            SparseColumn& col = plan.basis[static_cast<std::size_t>(jk)];
            for (int i = 0; i < n; ++i) {
                const double v = buf[static_cast<std::size_t>(i)];
                if (v != 0.0) {
                    col.idx.push_back(i);
                    col.val.push_back(v);
                }
            }
        }
    }
    return plan;
}

std::vector<double> extend_signal(const WaveletPlan& plan, std::span<const double> data) {
    if (static_cast<int>(data.size()) != plan.n) {
        throw std::invalid_argument("extend_signal: data length does not match plan");
    }
    std::vector<double> ext(static_cast<std::size_t>(plan.p));
    const int n = plan.n;
    for (int i = 0; i < plan.p; ++i) {
        int m = i % (2 * n);
        if (m >= n) m = 2 * n - 1 - m;
        ext[static_cast<std::size_t>(i)] = data[static_cast<std::size_t>(m)];
    }
    return ext;
}

std::vector<double> forward_extended(const WaveletPlan& plan, std::span<const double> ext) {
    if (static_cast<int>(ext.size()) != plan.p) {
        throw std::invalid_argument("forward_extended: signal length does not match plan");
    }
    std::vector<double> coef(ext.begin(), ext.end());
    std::vector<double> a(static_cast<std::size_t>(plan.p / 2));
    std::vector<double> d(static_cast<std::size_t>(plan.p / 2));
    for (int l = 1; l <= plan.levels; ++l) {
        const int L = plan.p >> (l - 1);
        analysis_step(coef, L, a, d);
        std::copy(a.begin(), a.begin() + L / 2, coef.begin());
        std::copy(d.begin(), d.begin() + L / 2, coef.begin() + L / 2);
    }
    return coef;
}

std::vector<double> forward(const WaveletPlan& plan, std::span<const double> data) {
    return forward_extended(plan, extend_signal(plan, data));
}

std::vector<double> inverse(const WaveletPlan& plan, std::span<const double> coefficients) {
    if (static_cast<int>(coefficients.size()) != plan.p) {
        throw std::invalid_argument("inverse: coefficient length does not match plan");
    }
    std::vector<double> buf(coefficients.begin(), coefficients.end());
    std::vector<double> scratch;
    inverse_partial(buf, plan.p, plan.levels, plan.levels, scratch);
    return buf;
}

const SparseColumn& basis_column(const WaveletPlan& plan, int jk) {
    if (jk < 0 || jk >= plan.p) {
        throw std::out_of_range("basis_column: coefficient index out of range");
    }
    return plan.basis[static_cast<std::size_t>(jk)];
}

} // namespace nmrdecon
