// SPDX-License-Identifier: Apache-2.0
#pragma once

// Slow, obviously-correct reference computations the fast paths are checked
// against. Nothing here calls into the library's numerical code.

#include "trainscan/classifier.hpp"
#include "trainscan/dsp.hpp"
#include "trainscan/eventstore.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace oracle {

/// Periodic Hann, written out from its definition.
inline std::vector<double> hann(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

/// |X_k| for k = 0..n/2 of the windowed frame, straight from the DFT sum.
inline std::vector<double> dft_magnitudes(std::span<const float> frame, const std::vector<double>& window) {
    const std::size_t n = frame.size();
    std::vector<double> out(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n);
            acc += window[t] * static_cast<double>(frame[t]) * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = std::abs(acc);
    }
    return out;
}

/// Pearson correlation of the raw template with each same-sized window of
/// the band [b0, b0 + bins), both mean-removed. Windows with (numerically)
/// no variance score 0.
inline std::vector<double> sliding_ncc(const trainscan::dsp::Spectrogram& spec, std::size_t b0,
                                       const std::vector<double>& raw, std::size_t frames, std::size_t bins,
                                       double zero_fraction) {
    const std::size_t n = frames * bins;
    double tmean = 0.0;
    for (double v : raw) tmean += v;
    tmean /= static_cast<double>(n);
    double tss = 0.0;
    for (double v : raw) tss += (v - tmean) * (v - tmean);
    std::vector<double> out;
    for (std::size_t g = 0; g + frames <= spec.frames; ++g) {
        double wmean = 0.0, energy = 0.0;
        for (std::size_t f = 0; f < frames; ++f) {
            for (std::size_t b = 0; b < bins; ++b) {
                const double v = spec.at(g + f, b0 + b);
                wmean += v;
                energy += v * v;
            }
        }
        wmean /= static_cast<double>(n);
        double num = 0.0, wss = 0.0;
        for (std::size_t f = 0; f < frames; ++f) {
            for (std::size_t b = 0; b < bins; ++b) {
                const double w = spec.at(g + f, b0 + b) - wmean;
                num += (raw[f * bins + b] - tmean) * w;
                wss += w * w;
            }
        }
        out.push_back(energy > 0.0 && wss > zero_fraction * energy ? num / std::sqrt(tss * wss) : 0.0);
    }
    return out;
}

/// Largest one-to-one matching, by trying every assignment. Small inputs only.
inline std::size_t max_matching(const std::vector<trainscan::store::Interval>& det,
                                const std::vector<trainscan::store::Interval>& truth, double fraction) {
    auto ok = [&](const trainscan::store::Interval& a, const trainscan::store::Interval& b) {
        if (a.channel != b.channel) return false;
        const auto ov = std::min(a.end, b.end) - std::max(a.begin, b.begin);
        const auto shorter = std::min(a.end - a.begin, b.end - b.begin);
        return ov.count() > 0 && static_cast<double>(ov.count()) >= fraction * static_cast<double>(shorter.count());
    };
    std::vector<bool> used(truth.size(), false);
    std::function<std::size_t(std::size_t)> best = [&](std::size_t i) -> std::size_t {
        if (i == det.size()) return 0;
        std::size_t b = best(i + 1);
        for (std::size_t j = 0; j < truth.size(); ++j) {
            if (!used[j] && ok(det[i], truth[j])) {
                used[j] = true;
                b = std::max(b, 1 + best(i + 1));
                used[j] = false;
            }
        }
        return b;
    };
    return best(0);
}

/// Mean logistic loss written out independently of the library.
inline double logistic_loss(const trainscan::detect::ClassifierModel& m,
                            std::span<const trainscan::detect::FeatureVector> x, std::span<const bool> y) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double z = m.bias;
        for (std::size_t k = 0; k < trainscan::detect::kFeatureCount; ++k) {
            z += m.weights[k] * (x[i].values[k] - m.mean[k]) / m.scale[k];
        }
        // log(1 + e^-z) for positives, log(1 + e^z) for negatives
        const double s = y[i] ? -z : z;
        total += s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
    }
    return total / static_cast<double>(x.size());
}

/// Central differences of logistic_loss in (weights..., bias).
inline std::array<double, trainscan::detect::kFeatureCount + 1>
loss_gradient_fd(const trainscan::detect::ClassifierModel& model,
                 std::span<const trainscan::detect::FeatureVector> x, std::span<const bool> y, double h = 1e-6) {
    std::array<double, trainscan::detect::kFeatureCount + 1> g{};
    for (std::size_t i = 0; i <= trainscan::detect::kFeatureCount; ++i) {
        auto plus = model, minus = model;
        double& p = i < trainscan::detect::kFeatureCount ? plus.weights[i] : plus.bias;
        double& m = i < trainscan::detect::kFeatureCount ? minus.weights[i] : minus.bias;
        p += h;
        m -= h;
        g[i] = (logistic_loss(plus, x, y) - logistic_loss(minus, x, y)) / (2 * h);
    }
    return g;
}

} // namespace oracle
