// SPDX-License-Identifier: Apache-2.0
#include "trainscan/detectors.hpp"

#include "trainscan/error.hpp"

#include <algorithm>
#include <cmath>

namespace trainscan::detect {

namespace {

// population mean and coefficient of variation
std::pair<double, double> mean_cv(std::span<const double> v) {
    if (v.empty()) {
        return {0.0, 0.0};
    }
    double sum = 0.0;
    for (double x : v) {
        sum += x;
    }
    const double mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) {
        ss += (x - mean) * (x - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(v.size()));
    return {mean, mean != 0.0 ? sd / mean : 0.0};
}

} // namespace

void DetectorConfig::validate() const {
    const bool ok = band_lo_hz >= 0.0 && band_hi_hz > band_lo_hz && threshold_k > 0.0 && min_pulse_s > 0.0 &&
                    max_pulse_s >= min_pulse_s && tau_max_s > 0.0 && min_pulses >= 2 &&
                    max_train_duration_s > 0.0 && accept_p > 0.0 && accept_p <= 1.0;
    if (!ok) {
        throw Error(ErrorCode::invalid_argument, "detector config: values must be positive, min_pulses >= 2");
    }
}

namespace {

std::pair<std::size_t, std::size_t> band_bins(const dsp::Spectrogram& spec, const DetectorConfig& cfg) {
    cfg.validate();
    const double nyquist = spec.params.sample_rate_hz / 2.0;
    if (cfg.band_hi_hz > nyquist || spec.bins == 0) {
        throw Error(ErrorCode::out_of_range, "detector band exceeds the spectrogram range");
    }
    return {spec.bin_of(cfg.band_lo_hz), spec.bin_of(cfg.band_hi_hz)};
}

} // namespace

std::vector<double> band_means(const dsp::Spectrogram& spec, const DetectorConfig& cfg) {
    const auto [b_lo, b_hi] = band_bins(spec, cfg);
    const double nb = static_cast<double>(b_hi - b_lo + 1);
    std::vector<double> band_mean(spec.frames);
    for (std::size_t f = 0; f < spec.frames; ++f) {
        double s = 0.0;
        for (std::size_t b = b_lo; b <= b_hi; ++b) {
            s += spec.at(f, b);
        }
        band_mean[f] = s / nb;
    }
    return band_mean;
}

std::vector<Pulse> detect_pulses(const dsp::Spectrogram& spec, const DetectorConfig& cfg) {
    const auto [b_lo, b_hi] = band_bins(spec, cfg);
    const double hop_s = spec.params.hop_s();
    const double half_bin = spec.params.bin_hz() / 2.0;
    const std::vector<double> band_mean = band_means(spec, cfg);

    std::vector<Pulse> pulses;
    std::size_t f = 0;
    while (f < spec.frames) {
        if (!(band_mean[f] > cfg.threshold_k)) {
            ++f;
            continue;
        }
        const std::size_t a = f;
        while (f < spec.frames && band_mean[f] > cfg.threshold_k) {
            ++f;
        }
        const std::size_t b = f - 1;
        const double duration = static_cast<double>(b - a + 1) * hop_s;
        if (duration < cfg.min_pulse_s - 1e-12 || duration > cfg.max_pulse_s + 1e-12) {
            continue;
        }
        std::size_t peak = a;
        for (std::size_t k = a + 1; k <= b; ++k) {
            if (band_mean[k] > band_mean[peak]) {
                peak = k;
            }
        }
        std::size_t pb = b_lo;
        for (std::size_t k = b_lo + 1; k <= b_hi; ++k) {
            if (spec.at(peak, k) > spec.at(peak, pb)) {
                pb = k;
            }
        }
        const double half = 0.5 * spec.at(peak, pb);
        std::size_t lo = pb;
        std::size_t hi = pb;
        while (lo > b_lo && spec.at(peak, lo - 1) >= half) {
            --lo;
        }
        while (hi < b_hi && spec.at(peak, hi + 1) >= half) {
            ++hi;
        }
        Pulse p;
        p.t_peak_s = spec.frame_times_s[peak];
        p.t0_s = spec.frame_times_s[a] - hop_s / 2.0;
        p.t1_s = spec.frame_times_s[b] + hop_s / 2.0;
        p.f_lo_hz = std::max(0.0, spec.bin_freqs_hz[lo] - half_bin);
        p.f_hi_hz = spec.bin_freqs_hz[hi] + half_bin;
        p.peak_score = band_mean[peak];
        pulses.push_back(p);
    }
    return pulses;
}

PulseTrainEvent make_event(std::vector<Pulse> pulses) {
    PulseTrainEvent ev;
    if (pulses.empty()) {
        return ev;
    }
    ev.t0_s = pulses.front().t0_s;
    ev.t1_s = pulses.front().t1_s;
    ev.f_lo_hz = pulses.front().f_lo_hz;
    ev.f_hi_hz = pulses.front().f_hi_hz;
    double score = 0.0;
    std::vector<double> ipis;
    for (std::size_t i = 0; i < pulses.size(); ++i) {
        const Pulse& p = pulses[i];
        ev.t0_s = std::min(ev.t0_s, p.t0_s);
        ev.t1_s = std::max(ev.t1_s, p.t1_s);
        ev.f_lo_hz = std::min(ev.f_lo_hz, p.f_lo_hz);
        ev.f_hi_hz = std::max(ev.f_hi_hz, p.f_hi_hz);
        score += p.peak_score;
        if (i > 0) {
            ipis.push_back(p.t_peak_s - pulses[i - 1].t_peak_s);
        }
    }
    ev.n_pulses = static_cast<int>(pulses.size());
    ev.score = score / static_cast<double>(pulses.size());
    std::tie(ev.ipi_mean_s, ev.ipi_cv) = mean_cv(ipis);
    if (ev.n_pulses == 2) {
        ev.ipi_cv = 0.0;
    }
    ev.pulses = std::move(pulses);
    return ev;
}

std::vector<PulseTrainEvent> group_pulse_trains(std::span<const Pulse> pulses, const DetectorConfig& cfg) {
    cfg.validate();
    std::vector<PulseTrainEvent> events;
    std::vector<Pulse> open;
    auto close = [&] {
        if (static_cast<int>(open.size()) >= cfg.min_pulses) {
            events.push_back(make_event(std::move(open)));
        }
        open.clear();
    };
    for (const Pulse& p : pulses) {
        if (!open.empty()) {
            const bool near = p.t_peak_s - open.back().t_peak_s <= cfg.tau_max_s;
            const bool fits = p.t1_s - open.front().t0_s <= cfg.max_train_duration_s;
            if (!(near && fits)) {
                close();
            }
        }
        open.push_back(p);
    }
    close();
    return events;
}

FeatureVector extract_features(const PulseTrainEvent& event) {
    FeatureVector fv;
    std::vector<double> peaks;
    peaks.reserve(event.pulses.size());
    for (const auto& p : event.pulses) {
        peaks.push_back(p.peak_score);
    }
    const auto [peak_mean, peak_cv] = mean_cv(peaks);
    fv.values = {
        event.t1_s - event.t0_s,
        static_cast<double>(event.n_pulses),
        event.ipi_mean_s,
        event.ipi_cv,
        event.f_hi_hz - event.f_lo_hz,
        0.5 * (event.f_lo_hz + event.f_hi_hz),
        peak_mean,
        peak_cv,
    };
    return fv;
}

} // namespace trainscan::detect
