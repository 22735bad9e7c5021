#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace nmrdecon {

/// How the observed signal is carried to the (power-of-two) coefficient length p.
enum class ExtensionPolicy {
    Auto,   // p = n for power-of-two n, else the next power of two; mirror-padded
    Padded, // force p = 2 * 2^ceil(log2 n) for extra border room
};

struct WaveletIndex {
    int level = 0;     // 0 = approximation band, 1 = coarsest detail, `levels` = finest
    int translate = 0; // position within the band
};

/// One inverse-transform column restricted to the observed grid positions.
struct SparseColumn {
    std::vector<int> idx;
    std::vector<double> val;
};

struct WaveletPlan {
    int n = 0;      // observed data length
    int p = 0;      // coefficient-space length (power of two, >= n)
    int levels = 0; // decomposition depth
    ExtensionPolicy extension = ExtensionPolicy::Auto;
    std::vector<WaveletIndex> level_index; // flat coefficient position -> (level, translate)
    std::vector<SparseColumn> basis;       // flat position -> inverse column on observed grid
};

/// The 12-tap symlet-6 analysis low-pass filter.
std::span<const double, 12> sym6_lowpass();
/// Quadrature-mirror high-pass filter.
std::span<const double, 12> sym6_highpass();

/// Builds a transform plan. levels < 0 selects the default depth log2(p) - 3,
/// which leaves an 8-coefficient approximation band.
WaveletPlan make_plan(int n, int levels = -1, ExtensionPolicy extension = ExtensionPolicy::Auto);

/// Half-sample symmetric extension of the observed data to length p.
std::vector<double> extend_signal(const WaveletPlan& plan, std::span<const double> data);

/// Wavelet coefficients of the extended signal (input length n).
std::vector<double> forward(const WaveletPlan& plan, std::span<const double> data);

/// Transform of an already-extended length-p signal.
std::vector<double> forward_extended(const WaveletPlan& plan, std::span<const double> ext);

/// Inverse transform; returns the length-p extended-domain signal. The observed
/// reconstruction is its first n entries.
std::vector<double> inverse(const WaveletPlan& plan, std::span<const double> coefficients);

/// The jk-th inverse column restricted to observed positions (precomputed, sparse).
const SparseColumn& basis_column(const WaveletPlan& plan, int jk);

} // namespace nmrdecon
