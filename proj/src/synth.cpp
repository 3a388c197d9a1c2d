// SPDX-License-Identifier: Apache-2.0
#include "trainscan/synth.hpp"

#include "trainscan/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace trainscan::synth {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> make_noise(const NoiseSpec& spec, std::size_t n, std::mt19937_64& rng) {
    std::vector<double> out(n, 0.0);
    if (spec.kind == NoiseKind::none || spec.rms <= 0.0) {
        return out;
    }
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& v : out) {
        v = gauss(rng);
    }
    if (spec.kind == NoiseKind::pink) {
        // Paul Kellet's refined pinking filter
        double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
        for (auto& v : out) {
            const double w = v;
            b0 = 0.99886 * b0 + w * 0.0555179;
            b1 = 0.99332 * b1 + w * 0.0750759;
            b2 = 0.96900 * b2 + w * 0.1538520;
            b3 = 0.86650 * b3 + w * 0.3104856;
            b4 = 0.55000 * b4 + w * 0.5329522;
            b5 = -0.7616 * b5 - w * 0.0168980;
            v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
            b6 = w * 0.115926;
        }
    }
    double energy = 0.0;
    for (double v : out) {
        energy += v * v;
    }
    const double scale = spec.rms / std::sqrt(energy / static_cast<double>(n));
    for (auto& v : out) {
        v *= scale;
    }
    return out;
}

// Unit-RMS pulse waveform with a Hann envelope.
std::vector<double> make_pulse(const EventSpec& ev, int rate, std::mt19937_64& rng) {
    const auto n = static_cast<std::size_t>(std::llround(ev.pulse_duration_s * rate));
    std::vector<double> w(n, 0.0);
    if (n < 2) {
        return w;
    }
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    std::vector<double> freqs;
    if (ev.kind == EventKind::tone) {
        freqs.push_back(0.5 * (ev.f_lo_hz + ev.f_hi_hz));
    } else {
        const double span = ev.f_hi_hz - ev.f_lo_hz;
        const int k = std::max(2, static_cast<int>(std::ceil(span / 4.0)) + 1);
        for (int i = 0; i < k; ++i) {
            freqs.push_back(ev.f_lo_hz + span * i / (k - 1));
        }
    }
    for (double f : freqs) {
        const double ph = phase(rng);
        for (std::size_t i = 0; i < n; ++i) {
            w[i] += std::sin(kTwoPi * f * static_cast<double>(i) / rate + ph);
        }
    }
    const bool tone = ev.kind == EventKind::tone;
    const std::size_t fade = tone ? std::min<std::size_t>(n / 4, static_cast<std::size_t>(rate / 100)) : 0;
    for (std::size_t i = 0; i < n; ++i) {
        double env = 1.0;
        if (!tone) {
            env = 0.5 - 0.5 * std::cos(kTwoPi * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
        } else if (i < fade) {
            env = static_cast<double>(i) / fade;
        } else if (n - 1 - i < fade) {
            env = static_cast<double>(n - 1 - i) / fade;
        }
        w[i] *= env;
    }
    double energy = 0.0;
    for (double v : w) {
        energy += v * v;
    }
    const double rms = std::sqrt(energy / static_cast<double>(n));
    if (rms > 0.0) {
        for (auto& v : w) {
            v /= rms;
        }
    }
    return w;
}

std::string kind_name(EventKind k) {
    switch (k) {
    case EventKind::tone: return "tone";
    case EventKind::click: return "click";
    case EventKind::pulse_train: return "pulse_train";
    }
    return "pulse_train";
}

EventKind kind_from(const std::string& s) {
    if (s == "tone") return EventKind::tone;
    if (s == "click") return EventKind::click;
    if (s == "pulse_train") return EventKind::pulse_train;
    throw Error(ErrorCode::format, "scene: unknown event kind '" + s + "'");
}

} // namespace

Scene synth_generate(const SceneSpec& spec, std::uint64_t seed) {
    if (spec.duration_s <= 0.0 || spec.sample_rate_hz <= 0) {
        throw Error(ErrorCode::invalid_argument, "scene: duration and sample rate must be positive");
    }
    const int rate = spec.sample_rate_hz;
    const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * rate));
    std::mt19937_64 rng(seed);
    std::vector<double> mix = make_noise(spec.noise, n, rng);
    const double noise_rms = spec.noise.kind == NoiseKind::none ? 0.0 : spec.noise.rms;

    Scene scene;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (std::size_t ei = 0; ei < spec.events.size(); ++ei) {
        const EventSpec& ev = spec.events[ei];
        const int count = ev.kind == EventKind::pulse_train ? ev.n_pulses : 1;
        if (count < 1 || ev.pulse_duration_s <= 0.0 || !(ev.f_lo_hz < ev.f_hi_hz) || ev.f_lo_hz < 0.0 ||
            ev.f_hi_hz > rate / 2.0) {
            throw Error(ErrorCode::invalid_argument, "scene: event " + std::to_string(ei) + " is malformed");
        }
        double target_rms = ev.amplitude_rms;
        if (target_rms <= 0.0) {
            if (noise_rms <= 0.0) {
                throw Error(ErrorCode::invalid_argument,
                            "scene: event " + std::to_string(ei) + " specifies an SNR against a silent background");
            }
            target_rms = noise_rms * std::pow(10.0, ev.snr_db / 20.0);
        }
        TruthEvent truth;
        truth.channel_id = spec.channel_id;
        truth.f_lo_hz = ev.f_lo_hz;
        truth.f_hi_hz = ev.f_hi_hz;
        truth.label = ev.label;
        double t = ev.t_start_s;
        for (int p = 0; p < count; ++p) {
            if (p > 0) {
                t += ev.ipi_s * (1.0 + ev.ipi_jitter * unit(rng));
            }
            const double amp = target_rms * (1.0 + ev.amplitude_jitter * unit(rng));
            const auto first = static_cast<std::int64_t>(std::llround(t * rate));
            const std::vector<double> shape = make_pulse(ev, rate, rng);
            const auto last = first + static_cast<std::int64_t>(shape.size());
            if (first < 0 || last > static_cast<std::int64_t>(n)) {
                throw Error(ErrorCode::out_of_range,
                            "scene: event " + std::to_string(ei) + " extends outside the clip");
            }
            for (std::size_t i = 0; i < shape.size(); ++i) {
                const double v = amp * shape[i];
                if (std::abs(v) > 1.0) {
                    throw Error(ErrorCode::invalid_argument,
                                "scene: event " + std::to_string(ei) + " exceeds full scale at the requested level");
                }
                mix[static_cast<std::size_t>(first) + i] += v;
            }
            truth.pulses.push_back({static_cast<double>(first) / rate, static_cast<double>(last) / rate});
        }
        truth.begin_s = truth.pulses.front().t0_s;
        truth.end_s = truth.pulses.back().t1_s;
        scene.truth.push_back(std::move(truth));
    }
    std::stable_sort(scene.truth.begin(), scene.truth.end(),
                     [](const TruthEvent& a, const TruthEvent& b) { return a.begin_s < b.begin_s; });

    scene.clip.sample_rate_hz = rate;
    scene.clip.start_utc = spec.start_utc;
    scene.clip.channel_id = spec.channel_id;
    scene.clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        scene.clip.samples[i] = static_cast<float>(std::clamp(mix[i], -1.0, 1.0));
    }
    return scene;
}

SceneSpec scene_from_json(const std::string& text) {
    SceneSpec spec;
    try {
        const json j = json::parse(text);
        spec.duration_s = j.at("duration_s").get<double>();
        spec.sample_rate_hz = j.value("sample_rate_hz", 2000);
        if (j.contains("start_utc")) {
            spec.start_utc = parse_iso8601_or_throw(j.at("start_utc").get<std::string>());
        }
        spec.channel_id = j.value("channel_id", 0);
        if (j.contains("noise")) {
            const auto& nj = j.at("noise");
            const std::string kind = nj.value("kind", std::string("white"));
            spec.noise.kind = kind == "none" ? NoiseKind::none : kind == "pink" ? NoiseKind::pink : NoiseKind::white;
            if (kind != "none" && kind != "pink" && kind != "white") {
                throw Error(ErrorCode::format, "scene: unknown noise kind '" + kind + "'");
            }
            spec.noise.rms = nj.value("rms", 0.05);
        }
        for (const auto& ej : j.value("events", json::array())) {
            EventSpec ev;
            ev.kind = kind_from(ej.value("kind", std::string("pulse_train")));
            ev.t_start_s = ej.at("t_start_s").get<double>();
            ev.n_pulses = ej.value("n_pulses", 1);
            ev.ipi_s = ej.value("ipi_s", 0.5);
            ev.ipi_jitter = ej.value("ipi_jitter", 0.0);
            ev.pulse_duration_s = ej.value("pulse_duration_s", 0.1);
            ev.f_lo_hz = ej.value("f_lo_hz", 100.0);
            ev.f_hi_hz = ej.value("f_hi_hz", 300.0);
            ev.snr_db = ej.value("snr_db", 15.0);
            ev.amplitude_rms = ej.value("amplitude_rms", 0.0);
            ev.amplitude_jitter = ej.value("amplitude_jitter", 0.0);
            ev.label = ej.value("label", std::string("signal"));
            spec.events.push_back(ev);
        }
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::format, std::string("scene: ") + ex.what());
    }
    return spec;
}

std::string scene_to_json(const SceneSpec& spec) {
    json j;
    j["duration_s"] = spec.duration_s;
    j["sample_rate_hz"] = spec.sample_rate_hz;
    j["start_utc"] = format_iso8601(spec.start_utc);
    j["channel_id"] = spec.channel_id;
    j["noise"] = {{"kind", spec.noise.kind == NoiseKind::none ? "none"
                           : spec.noise.kind == NoiseKind::pink ? "pink"
                                                                 : "white"},
                  {"rms", spec.noise.rms}};
    j["events"] = json::array();
    for (const auto& ev : spec.events) {
        j["events"].push_back({{"kind", kind_name(ev.kind)},
                               {"t_start_s", ev.t_start_s},
                               {"n_pulses", ev.n_pulses},
                               {"ipi_s", ev.ipi_s},
                               {"ipi_jitter", ev.ipi_jitter},
                               {"pulse_duration_s", ev.pulse_duration_s},
                               {"f_lo_hz", ev.f_lo_hz},
                               {"f_hi_hz", ev.f_hi_hz},
                               {"snr_db", ev.snr_db},
                               {"amplitude_rms", ev.amplitude_rms},
                               {"amplitude_jitter", ev.amplitude_jitter},
                               {"label", ev.label}});
    }
    return j.dump(2) + "\n";
}

std::vector<std::filesystem::path> write_scene_files(const std::filesystem::path& dir,
                                                     const std::string& station,
                                                     const audio::AudioClip& clip, double file_seconds) {
    std::filesystem::create_directories(dir);
    const auto per_file = static_cast<std::size_t>(std::llround(file_seconds * clip.sample_rate_hz));
    if (per_file == 0) {
        throw Error(ErrorCode::invalid_argument, "file length must be positive");
    }
    const std::int64_t first_index = sample_index_at_or_after(clip.start_utc, clip.sample_rate_hz);
    std::vector<std::filesystem::path> written;
    for (std::size_t off = 0; off < clip.samples.size(); off += per_file) {
        audio::AudioClip part;
        part.sample_rate_hz = clip.sample_rate_hz;
        part.channel_id = clip.channel_id;
        part.start_utc = sample_time(first_index + static_cast<std::int64_t>(off), clip.sample_rate_hz);
        const std::size_t end = std::min(clip.samples.size(), off + per_file);
        part.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(off),
                            clip.samples.begin() + static_cast<std::ptrdiff_t>(end));
        const auto path = dir / audio::make_file_name(station, clip.channel_id, part.start_utc);
        audio::write_wav(path, part);
        written.push_back(path);
    }
    return written;
}

} // namespace trainscan::synth
