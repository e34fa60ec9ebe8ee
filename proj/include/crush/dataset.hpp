#pragma once
// Synthetic datasets for end-to-end checks. The main one is "drumlets":
// 64-sample exponentially decaying sinusoids in three frequency bands, labeled
// by band. Decaying energy is easy to verify on generated output, which makes
// the corpus a useful structural probe at toy scale.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "crush/common.hpp"
#include "crush/rng.hpp"

namespace crush {

inline constexpr std::size_t kDrumletDim = 64;

struct LabeledData {
    std::vector<Vec> x;
    std::vector<int> y;
};

// x_j = A exp(-tau j / 64) sin(2 pi k j / 64), with per-sample draws in the
// order: cycle count k (within the class band), amplitude A ~ U[0.5, 1],
// decay tau ~ U[4, 16]. Class of sample i is i mod 3; bands are
// low {1, 2}, mid {3, 4, 5}, high {6, 7, 8} cycles.
inline LabeledData make_drumlets(std::size_t n, Rng& rng) {
    static const std::vector<std::vector<int>> bands = {{1, 2}, {3, 4, 5}, {6, 7, 8}};
    LabeledData data;
    data.x.reserve(n);
    data.y.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 3);
        const auto& band = bands[static_cast<std::size_t>(cls)];
        const int k = band[rng.uniform_index(band.size())];
        const double amp = rng.uniform(0.5, 1.0);
        const double tau = rng.uniform(4.0, 16.0);
        Vec x(kDrumletDim);
        for (std::size_t j = 0; j < kDrumletDim; ++j) {
            const double u = static_cast<double>(j) / static_cast<double>(kDrumletDim);
            x[j] = amp * std::exp(-tau * u) * std::sin(2.0 * 3.14159265358979323846 * k * u);
        }
        data.x.push_back(std::move(x));
        data.y.push_back(cls);
    }
    return data;
}

// Fraction of adjacent 8-sample block pairs whose energy increases, ignoring
// the first pair so the attack transient does not count. 0 for a clean decay,
// up to 1 for a signal that keeps growing.
//
// noise_floor, as a fraction of the peak block energy, sets how large an
// increase must be before it counts. The default 0 counts every strict
// increase, which is the right reading for exact waveforms but saturates on
// sampled output: the late blocks of a drumlet carry ~1e-5 of the peak
// energy, so any wideband residual turns their ordering into coin flips.
inline double envelope_violation_fraction(const Vec& x, double noise_floor = 0.0) {
    constexpr std::size_t block = 8;
    if (x.size() < 3 * block || x.size() % block != 0)
        throw std::invalid_argument("envelope_violation_fraction: need >= 3 blocks of 8");
    if (noise_floor < 0.0)
        throw std::invalid_argument("envelope_violation_fraction: noise_floor < 0");
    const std::size_t nb = x.size() / block;
    std::vector<double> energy(nb, 0.0);
    double peak = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t j = 0; j < block; ++j) {
            const double v = x[b * block + j];
            energy[b] += v * v;
        }
        peak = std::max(peak, energy[b]);
    }
    const double floor = noise_floor * peak;
    std::size_t violations = 0;
    for (std::size_t b = 1; b + 1 < nb; ++b)
        if (energy[b + 1] > energy[b] + floor) ++violations;
    return static_cast<double>(violations) / static_cast<double>(nb - 2);
}

}  // namespace crush
