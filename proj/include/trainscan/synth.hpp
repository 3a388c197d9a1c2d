// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "trainscan/audio.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace trainscan::synth {

enum class NoiseKind { none, white, pink };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::white;
    double rms = 0.05;
};

enum class EventKind { tone, click, pulse_train };

/// One injected event. SNR is broadband: 20*log10(pulse RMS over the pulse
/// duration / background RMS). `amplitude_rms`, when positive, overrides SNR.
struct EventSpec {
    EventKind kind = EventKind::pulse_train;
    double t_start_s = 0.0;
    int n_pulses = 1;
    double ipi_s = 0.5;
    double ipi_jitter = 0.0;       ///< max relative deviation of each interval, uniform
    double pulse_duration_s = 0.1;
    double f_lo_hz = 100.0;
    double f_hi_hz = 300.0;
    double snr_db = 15.0;
    double amplitude_rms = 0.0;
    double amplitude_jitter = 0.0; ///< max relative deviation of each pulse amplitude
    std::string label = "signal";
};

struct SceneSpec {
    double duration_s = 60.0;
    int sample_rate_hz = 2000;
    UtcTime start_utc{};
    int channel_id = 0;
    NoiseSpec noise;
    std::vector<EventSpec> events;
};

struct TruthPulse {
    double t0_s = 0.0;
    double t1_s = 0.0;
};

struct TruthEvent {
    int channel_id = 0;
    double begin_s = 0.0; ///< relative to clip start
    double end_s = 0.0;
    double f_lo_hz = 0.0;
    double f_hi_hz = 0.0;
    std::string label;
    std::vector<TruthPulse> pulses;
};

struct Scene {
    audio::AudioClip clip;
    std::vector<TruthEvent> truth;
};

/// Deterministic in (spec, seed). Throws Error(out_of_range) for events
/// outside the clip and Error(invalid_argument) when a requested level is not
/// achievable (SNR against silence, or pulse peak beyond full scale).
Scene synth_generate(const SceneSpec& spec, std::uint64_t seed);

SceneSpec scene_from_json(const std::string& text);
std::string scene_to_json(const SceneSpec& spec);

/// Splits the clip into files of `file_seconds` named by the station/channel/
/// start convention. Returns the written paths.
std::vector<std::filesystem::path> write_scene_files(const std::filesystem::path& dir,
                                                     const std::string& station,
                                                     const audio::AudioClip& clip,
                                                     double file_seconds);

} // namespace trainscan::synth
