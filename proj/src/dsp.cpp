// SPDX-License-Identifier: Apache-2.0
#include "trainscan/dsp.hpp"

#include "trainscan/error.hpp"
#include "trainscan/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace trainscan::dsp {

namespace {

double median_inplace(std::vector<double>& v) {
    const std::size_t n = v.size();
    const std::size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (n % 2 == 1) {
        return upper;
    }
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

} // namespace

std::string to_string(WindowKind w) {
    switch (w) {
    case WindowKind::hann: return "hann";
    case WindowKind::hamming: return "hamming";
    case WindowKind::rectangular: return "rectangular";
    }
    return "hann";
}

WindowKind window_from_string(const std::string& name) {
    if (name == "hann") return WindowKind::hann;
    if (name == "hamming") return WindowKind::hamming;
    if (name == "rectangular") return WindowKind::rectangular;
    throw Error(ErrorCode::invalid_argument, "unknown window '" + name + "'");
}

void StftParams::validate() const {
    if (fft_size < 16 || !is_power_of_two(static_cast<std::size_t>(fft_size))) {
        throw Error(ErrorCode::invalid_argument, "fft_size must be a power of two >= 16");
    }
    if (hop <= 0 || hop > fft_size) {
        throw Error(ErrorCode::invalid_argument, "hop must be in (0, fft_size]");
    }
    if (sample_rate_hz <= 0) {
        throw Error(ErrorCode::invalid_argument, "sample rate must be positive");
    }
}

std::vector<double> make_window(WindowKind kind, std::size_t n) {
    std::vector<double> w(n, 1.0);
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t i = 0; i < n; ++i) {
        const double c = std::cos(two_pi * static_cast<double>(i) / static_cast<double>(n));
        if (kind == WindowKind::hann) {
            w[i] = 0.5 - 0.5 * c;
        } else if (kind == WindowKind::hamming) {
            w[i] = 0.54 - 0.46 * c;
        }
    }
    return w;
}

std::size_t Spectrogram::bin_of(double hz) const {
    const double b = std::round(hz / params.bin_hz());
    return static_cast<std::size_t>(std::clamp(b, 0.0, static_cast<double>(bins - 1)));
}

std::int64_t frame_count(std::int64_t n_samples, const StftParams& params) {
    if (n_samples < params.fft_size) {
        return 0;
    }
    return (n_samples - params.fft_size) / params.hop + 1;
}

Spectrogram stft(std::span<const float> samples, const StftParams& params, std::int64_t first_frame) {
    params.validate();
    const std::int64_t frames = frame_count(static_cast<std::int64_t>(samples.size()), params);
    if (frames == 0) {
        throw Error(ErrorCode::invalid_argument, "clip shorter than one STFT frame");
    }
    Spectrogram out;
    out.params = params;
    out.first_frame = first_frame;
    out.frames = static_cast<std::size_t>(frames);
    out.bins = static_cast<std::size_t>(params.bins());
    out.magnitudes.resize(out.frames * out.bins);
    out.frame_times_s.resize(out.frames);
    out.bin_freqs_hz.resize(out.bins);
    for (std::size_t b = 0; b < out.bins; ++b) {
        out.bin_freqs_hz[b] = static_cast<double>(b) * params.bin_hz();
    }
    const auto n = static_cast<std::size_t>(params.fft_size);
    const std::vector<double> window = make_window(params.window, n);
    RealFft fft(n);
    auto in = fft.real();
    for (std::size_t f = 0; f < out.frames; ++f) {
        const std::size_t off = f * static_cast<std::size_t>(params.hop);
        for (std::size_t i = 0; i < n; ++i) {
            in[i] = static_cast<double>(samples[off + i]) * window[i];
        }
        fft.forward();
        const auto spec = fft.spectrum();
        double* row = out.magnitudes.data() + f * out.bins;
        for (std::size_t b = 0; b < out.bins; ++b) {
            row[b] = std::abs(spec[b]);
        }
        out.frame_times_s[f] = params.frame_time(first_frame + static_cast<std::int64_t>(f));
    }
    return out;
}

Spectrogram stft(const audio::AudioClip& clip, StftParams params) {
    params.sample_rate_hz = clip.sample_rate_hz;
    Spectrogram out = stft(std::span<const float>(clip.samples), params, 0);
    out.start_utc = clip.start_utc;
    return out;
}

NoiseProfile estimate_noise_profile(const Spectrogram& spec, std::size_t begin, std::size_t end) {
    if (end > spec.frames || begin >= end || end - begin < kMinNoiseFrames) {
        throw Error(ErrorCode::invalid_argument,
                    "noise profile needs at least " + std::to_string(kMinNoiseFrames) + " frames");
    }
    NoiseProfile p;
    p.median_per_bin.resize(spec.bins);
    p.mad_per_bin.resize(spec.bins);
    std::vector<double> column(end - begin);
    for (std::size_t b = 0; b < spec.bins; ++b) {
        for (std::size_t f = begin; f < end; ++f) {
            column[f - begin] = spec.at(f, b);
        }
        const double med = median_inplace(column);
        for (std::size_t f = begin; f < end; ++f) {
            column[f - begin] = std::abs(spec.at(f, b) - med);
        }
        p.median_per_bin[b] = med;
        p.mad_per_bin[b] = median_inplace(column);
    }
    std::vector<double> medians = p.median_per_bin;
    const double floor = std::max(1e-6 * median_inplace(medians), 1e-12);
    for (auto& m : p.mad_per_bin) {
        m = std::max(m, floor);
    }
    return p;
}

NoiseProfile estimate_noise_profile(const Spectrogram& spec) {
    return estimate_noise_profile(spec, 0, spec.frames);
}

void whiten_frames(Spectrogram& spec, const NoiseProfile& profile, std::size_t begin, std::size_t end) {
    if (profile.median_per_bin.size() != spec.bins || profile.mad_per_bin.size() != spec.bins) {
        throw Error(ErrorCode::invalid_argument, "noise profile bin count does not match spectrogram");
    }
    for (std::size_t f = begin; f < end; ++f) {
        double* row = spec.magnitudes.data() + f * spec.bins;
        for (std::size_t b = 0; b < spec.bins; ++b) {
            row[b] = std::max(0.0, (row[b] - profile.median_per_bin[b]) / profile.mad_per_bin[b]);
        }
    }
}

Spectrogram whiten(const Spectrogram& spec, const NoiseProfile& profile) {
    Spectrogram out = spec;
    whiten_frames(out, profile, 0, out.frames);
    return out;
}

double to_db(double magnitude) {
    if (!(magnitude > 0.0)) {
        return kDbFloor;
    }
    return std::max(kDbFloor, 20.0 * std::log10(magnitude));
}

} // namespace trainscan::dsp
