// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "trainscan/dsp.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace trainscan::detect {

struct DetectorConfig {
    double band_lo_hz = 100.0;
    double band_hi_hz = 500.0;
    double threshold_k = 5.0;       ///< on the band-mean whitened magnitude
    double min_pulse_s = 0.05;
    double max_pulse_s = 1.0;
    double tau_max_s = 2.0;         ///< largest allowed peak-to-peak gap inside a train
    int min_pulses = 5;
    double max_train_duration_s = 60.0;
    double accept_p = 0.5;          ///< classifier acceptance threshold p*

    void validate() const;
    friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

/// Times are in the spectrogram's time base (seconds).
struct Pulse {
    double t_peak_s = 0.0;
    double t0_s = 0.0;
    double t1_s = 0.0;
    double f_lo_hz = 0.0;
    double f_hi_hz = 0.0;
    double peak_score = 0.0; ///< largest band-mean whitened magnitude in the run

    friend bool operator==(const Pulse&, const Pulse&) = default;
};

struct PulseTrainEvent {
    std::vector<Pulse> pulses;
    double t0_s = 0.0;
    double t1_s = 0.0;
    int n_pulses = 0;
    double ipi_mean_s = 0.0;
    double ipi_cv = 0.0;
    double f_lo_hz = 0.0;
    double f_hi_hz = 0.0;
    double score = 0.0; ///< mean peak_score

    friend bool operator==(const PulseTrainEvent&, const PulseTrainEvent&) = default;
};

/// Per-frame mean of the whitened magnitude over the detector band's bins.
std::vector<double> band_means(const dsp::Spectrogram& whitened, const DetectorConfig& cfg);

/// Frame runs whose band-mean exceeds k, kept when their duration lies in
/// [min_pulse_s, max_pulse_s]. Band edges are the contiguous extent around the
/// peak bin of the peak frame where the value stays >= half the peak (-6 dB),
/// limited to the detector band. Sorted by t_peak.
std::vector<Pulse> detect_pulses(const dsp::Spectrogram& whitened, const DetectorConfig& cfg);

/// Builds an event from consecutive pulses (no gap checks).
PulseTrainEvent make_event(std::vector<Pulse> pulses);

/// Single greedy pass: a pulse joins the open train while its peak gap is
/// <= tau_max and the train stays within max_train_duration; closed trains
/// with at least min_pulses pulses are emitted.
std::vector<PulseTrainEvent> group_pulse_trains(std::span<const Pulse> pulses, const DetectorConfig& cfg);

inline constexpr std::size_t kFeatureCount = 8;

inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "duration_s",   "n_pulses",       "ipi_mean_s",      "ipi_cv",
    "bandwidth_hz", "center_freq_hz", "mean_peak_score", "peak_score_cv",
};

/// Fixed-order feature vector; the order is part of the persisted model contract.
struct FeatureVector {
    std::array<double, kFeatureCount> values{};

    double duration_s() const { return values[0]; }
    double n_pulses() const { return values[1]; }
    double ipi_mean_s() const { return values[2]; }
    double ipi_cv() const { return values[3]; }
    double bandwidth_hz() const { return values[4]; }
    double center_freq_hz() const { return values[5]; }
    double mean_peak_score() const { return values[6]; }
    double peak_score_cv() const { return values[7]; }

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

FeatureVector extract_features(const PulseTrainEvent& event);

} // namespace trainscan::detect
