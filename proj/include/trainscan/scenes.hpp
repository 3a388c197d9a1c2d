// SPDX-License-Identifier: Apache-2.0
#pragma once

// Scripted synthetic corpora: the reference scaling job, the recovery scene,
// boundary-straddling chunking scenes and the training-scale replica.

#include "trainscan/eventstore.hpp"
#include "trainscan/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace trainscan::scenes {

/// Truth labels used by the generators.
inline constexpr const char* kSignal = "signal";
inline constexpr const char* kEasyNoise = "easy_noise";
inline constexpr const char* kHardNoise = "hard_noise";

/// 10-24 pulses, 0.45-0.9 s intervals with jitter, 0.15-0.3 s band-limited
/// pulses somewhere in 120-420 Hz, 10-20 dB SNR, uneven amplitudes.
synth::EventSpec signal_train(std::mt19937_64& rng, double t_start_s);
/// Broadband (50-950 Hz) short clicks at irregular 0.6-1.5 s intervals.
synth::EventSpec easy_noise_train(std::mt19937_64& rng, double t_start_s);
/// Narrowband, signal-like band, strictly periodic (0.384 s), constant
/// amplitude, 25-40 short pulses: mechanical noise a signal-only model accepts.
synth::EventSpec hard_noise_train(std::mt19937_64& rng, double t_start_s);

/// Approximate extent of an event spec in seconds (worst case jitter).
double train_length_s(const synth::EventSpec& ev);

struct Mix {
    double signal = 1.0;
    double easy_noise = 0.0;
    double hard_noise = 0.0;
};

/// Trains placed left to right with random gaps of [min_gap_s, max_gap_s]
/// between them, each kind drawn with the weights of `mix`.
synth::SceneSpec random_scene(double duration_s, const Mix& mix, double min_gap_s, double max_gap_s,
                              std::uint64_t seed, UtcTime start);

UtcTime default_start();

/// 2 h at 2 kHz with about 200 trains.
synth::SceneSpec reference_scene(std::uint64_t seed);
/// 30 min of signal trains only.
synth::SceneSpec recovery_scene(std::uint64_t seed);
/// Mixed trains, several forced to straddle multiples of `unit_core_s`.
synth::SceneSpec chunking_scene(std::uint64_t seed, double duration_s, double unit_core_s);

/// Training-scale replica corpora.
synth::SceneSpec signal_corpus(std::uint64_t seed, double duration_s);
synth::SceneSpec easy_noise_corpus(std::uint64_t seed, double duration_s);
synth::SceneSpec hard_noise_corpus(std::uint64_t seed, double duration_s);
synth::SceneSpec noise_only_corpus(std::uint64_t seed, double duration_s);

/// Named presets for the CLI: reference, recovery, chunking, signal,
/// easy-noise, hard-noise, noise-only.
synth::SceneSpec preset(const std::string& name, std::uint64_t seed);
std::vector<std::string> preset_names();

store::GroundTruthTable truth_table(const synth::Scene& scene);

struct Materialized {
    std::filesystem::path manifest;
    std::filesystem::path truth;
    std::vector<std::filesystem::path> files;
};

/// Generates the scene and writes WAV files (`file_seconds` each), a
/// manifest.json and truth.tsv under `dir`.
Materialized materialize(const synth::SceneSpec& spec, std::uint64_t seed, const std::filesystem::path& dir,
                         double file_seconds = 600.0, const std::string& station = "SYN");

} // namespace trainscan::scenes
