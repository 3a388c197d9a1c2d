// SPDX-License-Identifier: Apache-2.0
#include "trainscan/scenes.hpp"

#include "trainscan/error.hpp"

#include <algorithm>

namespace trainscan::scenes {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

} // namespace

synth::EventSpec signal_train(std::mt19937_64& rng, double t_start_s) {
    synth::EventSpec ev;
    ev.kind = synth::EventKind::pulse_train;
    ev.t_start_s = t_start_s;
    ev.n_pulses = uniform_int(rng, 10, 24);
    ev.ipi_s = uniform(rng, 0.45, 0.9);
    ev.ipi_jitter = 0.08;
    ev.pulse_duration_s = uniform(rng, 0.15, 0.3);
    const double width = uniform(rng, 120.0, 220.0);
    ev.f_lo_hz = uniform(rng, 120.0, 420.0 - width);
    ev.f_hi_hz = ev.f_lo_hz + width;
    ev.snr_db = uniform(rng, 10.0, 20.0);
    ev.amplitude_jitter = 0.3;
    ev.label = kSignal;
    return ev;
}

synth::EventSpec easy_noise_train(std::mt19937_64& rng, double t_start_s) {
    synth::EventSpec ev;
    ev.kind = synth::EventKind::pulse_train;
    ev.t_start_s = t_start_s;
    ev.n_pulses = uniform_int(rng, 6, 16);
    ev.ipi_s = uniform(rng, 0.9, 1.2);
    ev.ipi_jitter = 0.35;
    ev.pulse_duration_s = uniform(rng, 0.1, 0.2);
    ev.f_lo_hz = 50.0;
    ev.f_hi_hz = 950.0;
    ev.snr_db = uniform(rng, 12.0, 20.0);
    ev.amplitude_jitter = 0.5;
    ev.label = kEasyNoise;
    return ev;
}

synth::EventSpec hard_noise_train(std::mt19937_64& rng, double t_start_s) {
    synth::EventSpec ev;
    ev.kind = synth::EventKind::pulse_train;
    ev.t_start_s = t_start_s;
    ev.n_pulses = uniform_int(rng, 25, 40);
    ev.ipi_s = 0.384; // six hops: every pulse lands on the same frame phase
    ev.ipi_jitter = 0.0;
    ev.pulse_duration_s = 0.06;
    const double width = uniform(rng, 100.0, 160.0);
    ev.f_lo_hz = uniform(rng, 160.0, 380.0 - width);
    ev.f_hi_hz = ev.f_lo_hz + width;
    ev.snr_db = uniform(rng, 18.0, 22.0);
    ev.amplitude_jitter = 0.0;
    ev.label = kHardNoise;
    return ev;
}

double train_length_s(const synth::EventSpec& ev) {
    const int n = ev.kind == synth::EventKind::pulse_train ? ev.n_pulses : 1;
    return (n - 1) * ev.ipi_s * (1.0 + ev.ipi_jitter) + ev.pulse_duration_s;
}

UtcTime default_start() { return parse_iso8601_or_throw("2008-09-17T00:00:00Z"); }

synth::SceneSpec random_scene(double duration_s, const Mix& mix, double min_gap_s, double max_gap_s,
                              std::uint64_t seed, UtcTime start) {
    synth::SceneSpec spec;
    spec.duration_s = duration_s;
    spec.sample_rate_hz = 2000;
    spec.start_utc = start;
    spec.noise = {synth::NoiseKind::white, 0.01};
    std::mt19937_64 rng(seed ^ 0x5ce0e5ull);
    std::discrete_distribution<int> kind({mix.signal, mix.easy_noise, mix.hard_noise});
    double t = uniform(rng, min_gap_s, max_gap_s);
    while (true) {
        synth::EventSpec ev;
        switch (kind(rng)) {
        case 0: ev = signal_train(rng, t); break;
        case 1: ev = easy_noise_train(rng, t); break;
        default: ev = hard_noise_train(rng, t); break;
        }
        const double end = t + train_length_s(ev);
        if (end + 1.0 > duration_s) {
            break;
        }
        spec.events.push_back(ev);
        t = end + uniform(rng, min_gap_s, max_gap_s);
    }
    return spec;
}

synth::SceneSpec reference_scene(std::uint64_t seed) {
    return random_scene(7200.0, {0.6, 0.25, 0.15}, 8.0, 40.0, seed, default_start());
}

synth::SceneSpec recovery_scene(std::uint64_t seed) {
    return random_scene(1800.0, {1.0, 0.0, 0.0}, 8.0, 40.0, seed, default_start());
}

synth::SceneSpec chunking_scene(std::uint64_t seed, double duration_s, double unit_core_s) {
    synth::SceneSpec spec = random_scene(duration_s, {0.5, 0.25, 0.25}, 3.0, 30.0, seed, default_start());
    // Replace whatever sits near each unit boundary with a train that crosses it.
    std::mt19937_64 rng(seed ^ 0xb0a4d5ull);
    for (double edge = unit_core_s; edge < duration_s - 60.0; edge += unit_core_s) {
        std::erase_if(spec.events, [&](const synth::EventSpec& ev) {
            return ev.t_start_s < edge + 70.0 && ev.t_start_s + train_length_s(ev) > edge - 70.0;
        });
        synth::EventSpec ev;
        switch (uniform_int(rng, 0, 2)) {
        case 0: ev = signal_train(rng, 0.0); break;
        case 1: ev = easy_noise_train(rng, 0.0); break;
        default: ev = hard_noise_train(rng, 0.0); break;
        }
        ev.t_start_s = edge - uniform(rng, 0.1, 0.9) * train_length_s(ev);
        spec.events.push_back(ev);
        // A second train starting just after the boundary, close to the first.
        synth::EventSpec next = signal_train(rng, 0.0);
        next.t_start_s = ev.t_start_s + train_length_s(ev) + uniform(rng, 2.5, 6.0);
        if (next.t_start_s + train_length_s(next) < edge + 65.0) {
            spec.events.push_back(next);
        }
    }
    std::sort(spec.events.begin(), spec.events.end(),
              [](const synth::EventSpec& a, const synth::EventSpec& b) { return a.t_start_s < b.t_start_s; });
    return spec;
}

synth::SceneSpec signal_corpus(std::uint64_t seed, double duration_s) {
    return random_scene(duration_s, {1.0, 0.0, 0.0}, 6.0, 20.0, seed, default_start());
}

synth::SceneSpec easy_noise_corpus(std::uint64_t seed, double duration_s) {
    return random_scene(duration_s, {0.0, 1.0, 0.0}, 6.0, 20.0, seed, default_start());
}

synth::SceneSpec hard_noise_corpus(std::uint64_t seed, double duration_s) {
    return random_scene(duration_s, {0.0, 0.0, 1.0}, 6.0, 20.0, seed, default_start());
}

synth::SceneSpec noise_only_corpus(std::uint64_t seed, double duration_s) {
    return random_scene(duration_s, {0.0, 0.5, 0.5}, 6.0, 20.0, seed, default_start());
}

std::vector<std::string> preset_names() {
    return {"reference", "recovery", "chunking", "signal", "easy-noise", "hard-noise", "noise-only"};
}

synth::SceneSpec preset(const std::string& name, std::uint64_t seed) {
    if (name == "reference") return reference_scene(seed);
    if (name == "recovery") return recovery_scene(seed);
    if (name == "chunking") return chunking_scene(seed, 1800.0, 600.0);
    if (name == "signal") return signal_corpus(seed, 1800.0);
    if (name == "easy-noise") return easy_noise_corpus(seed, 1800.0);
    if (name == "hard-noise") return hard_noise_corpus(seed, 1800.0);
    if (name == "noise-only") return noise_only_corpus(seed, 1800.0);
    throw Error(ErrorCode::invalid_argument, "unknown scene preset '" + name + "'");
}

store::GroundTruthTable truth_table(const synth::Scene& scene) {
    std::vector<store::TruthEvent> rows;
    for (const auto& t : scene.truth) {
        store::TruthEvent r;
        r.channel = t.channel_id;
        r.begin_utc = scene.clip.start_utc + seconds_to_micros(t.begin_s);
        r.end_utc = scene.clip.start_utc + seconds_to_micros(t.end_s);
        r.f_lo_hz = t.f_lo_hz;
        r.f_hi_hz = t.f_hi_hz;
        r.label = t.label;
        rows.push_back(std::move(r));
    }
    return store::GroundTruthTable(std::move(rows));
}

Materialized materialize(const synth::SceneSpec& spec, std::uint64_t seed, const std::filesystem::path& dir,
                         double file_seconds, const std::string& station) {
    const synth::Scene scene = synth::synth_generate(spec, seed);
    Materialized m;
    m.files = synth::write_scene_files(dir, station, scene.clip, file_seconds);
    m.manifest = dir / "manifest.json";
    std::filesystem::remove(m.manifest);
    audio::build_manifest(dir).save(m.manifest);
    m.truth = dir / "truth.tsv";
    truth_table(scene).save(m.truth);
    return m;
}

} // namespace trainscan::scenes
