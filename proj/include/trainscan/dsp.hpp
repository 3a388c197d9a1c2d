// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "trainscan/audio.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace trainscan::dsp {

enum class WindowKind { hann, hamming, rectangular };

std::string to_string(WindowKind w);
WindowKind window_from_string(const std::string& name);

struct StftParams {
    int fft_size = 256;
    int hop = 128;
    WindowKind window = WindowKind::hann;
    int sample_rate_hz = 2000;

    /// fft_size a power of two >= 16, 0 < hop <= fft_size, positive rate.
    void validate() const;
    int bins() const { return fft_size / 2 + 1; }
    double hop_s() const { return static_cast<double>(hop) / sample_rate_hz; }
    double bin_hz() const { return static_cast<double>(sample_rate_hz) / fft_size; }
    /// Centre time of frame `index` relative to the sample origin.
    double frame_time(std::int64_t index) const {
        return static_cast<double>(index * hop + fft_size / 2) / sample_rate_hz;
    }

    friend bool operator==(const StftParams&, const StftParams&) = default;
};

/// Periodic window of length n.
std::vector<double> make_window(WindowKind kind, std::size_t n);

/// Linear magnitudes, frame-major.
struct Spectrogram {
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::vector<double> magnitudes;
    std::vector<double> frame_times_s;
    std::vector<double> bin_freqs_hz;
    StftParams params;
    UtcTime start_utc{};
    std::int64_t first_frame = 0; ///< global index of frame 0 on the analysis grid

    double at(std::size_t frame, std::size_t bin) const { return magnitudes[frame * bins + bin]; }
    double& at(std::size_t frame, std::size_t bin) { return magnitudes[frame * bins + bin]; }
    std::span<const double> frame(std::size_t f) const { return {magnitudes.data() + f * bins, bins}; }

    /// Bin nearest to `hz`, clamped to the valid range.
    std::size_t bin_of(double hz) const;
};

/// Number of full frames that fit in n samples (0 when n < fft_size).
std::int64_t frame_count(std::int64_t n_samples, const StftParams& params);

Spectrogram stft(const audio::AudioClip& clip, StftParams params);

/// Frames over `samples`, whose sample 0 sits at global frame grid index
/// `first_frame * hop`. Frame times are `params.frame_time(first_frame + k)`.
Spectrogram stft(std::span<const float> samples, const StftParams& params, std::int64_t first_frame);

struct NoiseProfile {
    std::vector<double> median_per_bin;
    std::vector<double> mad_per_bin;
};

constexpr std::size_t kMinNoiseFrames = 32;

/// Per-bin median and floored median absolute deviation over all frames.
NoiseProfile estimate_noise_profile(const Spectrogram& spec);
/// Same over frames [begin, end).
NoiseProfile estimate_noise_profile(const Spectrogram& spec, std::size_t begin, std::size_t end);

/// out = max(0, (x - median) / mad).
Spectrogram whiten(const Spectrogram& spec, const NoiseProfile& profile);
/// In place over frames [begin, end).
void whiten_frames(Spectrogram& spec, const NoiseProfile& profile, std::size_t begin, std::size_t end);

constexpr double kDbFloor = -120.0;
double to_db(double magnitude);

} // namespace trainscan::dsp
