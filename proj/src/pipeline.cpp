// SPDX-License-Identifier: Apache-2.0
#include "trainscan/pipeline.hpp"

#include "trainscan/error.hpp"
#include "trainscan/hash.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace trainscan::pipeline {

using nlohmann::json;

namespace {

json detector_json(const detect::DetectorConfig& d) {
    return json{
        {"band_lo_hz", d.band_lo_hz},
        {"band_hi_hz", d.band_hi_hz},
        {"threshold_k", d.threshold_k},
        {"min_pulse_s", d.min_pulse_s},
        {"max_pulse_s", d.max_pulse_s},
        {"tau_max_s", d.tau_max_s},
        {"min_pulses", d.min_pulses},
        {"max_train_duration_s", d.max_train_duration_s},
        {"accept_p", d.accept_p},
    };
}

detect::DetectorConfig detector_from(const json& j) {
    detect::DetectorConfig d;
    d.band_lo_hz = j.value("band_lo_hz", d.band_lo_hz);
    d.band_hi_hz = j.value("band_hi_hz", d.band_hi_hz);
    d.threshold_k = j.value("threshold_k", d.threshold_k);
    d.min_pulse_s = j.value("min_pulse_s", d.min_pulse_s);
    d.max_pulse_s = j.value("max_pulse_s", d.max_pulse_s);
    d.tau_max_s = j.value("tau_max_s", d.tau_max_s);
    d.min_pulses = j.value("min_pulses", d.min_pulses);
    d.max_train_duration_s = j.value("max_train_duration_s", d.max_train_duration_s);
    d.accept_p = j.value("accept_p", d.accept_p);
    return d;
}

json semantic_json(const AnalysisConfig& c) {
    return json{
        {"stft", {{"fft_size", c.stft.fft_size}, {"hop", c.stft.hop}, {"window", dsp::to_string(c.stft.window)}}},
        {"noise_block_frames", c.noise_block_frames},
        {"detector", detector_json(c.detector)},
        {"model", c.model ? json(c.model->digest()) : json(nullptr)},
    };
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) {
        --q;
    }
    return q;
}

// Samples of grid indices [first, first + count); unrecorded stretches are zero.
audio::ExtractedSpan extract_or_silence(const audio::RecordingManifest& m, int channel, std::int64_t first,
                                        std::int64_t count, int rate) {
    try {
        return audio::extract_samples(m, channel, first, count);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::out_of_range) {
            throw;
        }
        audio::ExtractedSpan out;
        out.clip.samples.assign(static_cast<std::size_t>(count), 0.0f);
        out.clip.sample_rate_hz = rate;
        out.clip.channel_id = channel;
        out.clip.start_utc = sample_time(first, rate);
        out.gaps.push_back({sample_time(first, rate), sample_time(first + count, rate)});
        return out;
    }
}

std::vector<std::string> sources_for(const audio::RecordingManifest& m, int channel, UtcTime t0, UtcTime t1) {
    std::vector<std::string> out;
    for (const auto& e : m.channel(channel)) {
        const UtcTime a = sample_time(e.first_index(), e.sample_rate_hz);
        const UtcTime b = sample_time(e.end_index(), e.sample_rate_hz);
        if (a < t1 && t0 < b) {
            out.push_back(e.path);
        }
    }
    return out;
}

std::string bool_cell(bool b) { return b ? "1" : "0"; }

} // namespace

void AnalysisConfig::validate() const {
    stft.validate();
    detector.validate();
    if (noise_block_frames < static_cast<int>(2 * dsp::kMinNoiseFrames)) {
        throw Error(ErrorCode::invalid_argument,
                    "noise_block_frames must be at least " + std::to_string(2 * dsp::kMinNoiseFrames));
    }
}

std::string AnalysisConfig::to_json() const {
    json j{
        {"format", "trainscan.analysis"},
        {"version", 1},
        {"stft", {{"fft_size", stft.fft_size}, {"hop", stft.hop}, {"window", dsp::to_string(stft.window)}}},
        {"noise_block_frames", noise_block_frames},
        {"detector", detector_json(detector)},
        {"model", model ? json::parse(model->to_json()) : json(nullptr)},
    };
    return j.dump();
}

AnalysisConfig AnalysisConfig::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.value("format", std::string("trainscan.analysis")) != "trainscan.analysis" ||
            j.value("version", 1) != 1) {
            throw Error(ErrorCode::format, "analysis config: unsupported format or version");
        }
        AnalysisConfig c;
        if (j.contains("stft")) {
            const auto& s = j.at("stft");
            c.stft.fft_size = s.value("fft_size", c.stft.fft_size);
            c.stft.hop = s.value("hop", c.stft.hop);
            c.stft.window = dsp::window_from_string(s.value("window", dsp::to_string(c.stft.window)));
        }
        c.noise_block_frames = j.value("noise_block_frames", c.noise_block_frames);
        if (j.contains("detector")) {
            c.detector = detector_from(j.at("detector"));
        }
        if (j.contains("model") && !j.at("model").is_null()) {
            c.model = detect::ClassifierModel::from_json(j.at("model").dump());
        }
        c.validate();
        return c;
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::format, std::string("analysis config: ") + ex.what());
    }
}

std::string AnalysisConfig::config_hash() const { return fnv1a_hex(semantic_json(*this).dump()); }

std::string AnalysisConfig::detector_id() const { return model ? "ptrain-logreg" : "ptrain-unclassified"; }

double AnalysisConfig::guard_s(int sample_rate_hz) const {
    const double rate = static_cast<double>(sample_rate_hz);
    return detector.tau_max_s + detector.max_pulse_s + 2.0 * stft.hop / rate + stft.fft_size / rate;
}

std::int64_t BlockLayout::count() const {
    if (job_frames <= 0) {
        return 0;
    }
    const std::int64_t full = job_frames / block;
    const std::int64_t rem = job_frames % block;
    if (full == 0) {
        return 1;
    }
    return (rem == 0 || 2 * rem < block) ? full : full + 1;
}

std::int64_t BlockLayout::begin(std::int64_t index) const { return index * block; }

std::int64_t BlockLayout::end(std::int64_t index) const {
    return index + 1 == count() ? job_frames : (index + 1) * block;
}

std::int64_t BlockLayout::index_of(std::int64_t frame) const {
    return std::min(frame / block, count() - 1);
}

UnitOutput analyze_unit(const audio::RecordingManifest& manifest, int channel, const TimeSpan& job_span,
                        const TimeSpan& core, const TimeSpan& padded, const AnalysisConfig& config) {
    config.validate();
    if (!manifest.has_channel(channel)) {
        throw Error(ErrorCode::not_found, "channel " + std::to_string(channel) + " is not in the manifest");
    }
    const int rate = manifest.sample_rate(channel);
    dsp::StftParams params = config.stft;
    params.sample_rate_hz = rate;
    params.validate();
    const auto& det = config.detector;

    // Job frame grid: frame g covers grid samples [j0 + g*hop, j0 + g*hop + fft).
    const std::int64_t j0 = sample_index_at_or_after(job_span.t0, rate);
    const std::int64_t j1 = sample_index_at_or_after(job_span.t1, rate);
    const std::int64_t job_frames = dsp::frame_count(j1 - j0, params);
    if (job_frames < static_cast<std::int64_t>(dsp::kMinNoiseFrames)) {
        throw Error(ErrorCode::invalid_argument, "job span is shorter than " +
                                                     std::to_string(dsp::kMinNoiseFrames) + " analysis frames");
    }
    const BlockLayout layout{job_frames, config.noise_block_frames};
    const UtcTime origin = sample_time(j0, rate);
    const std::int64_t hop = params.hop;

    // offset (µs from origin) -> first frame whose samples start at or after it
    auto frame_at = [&](Micros offset) {
        const __int128 num = static_cast<__int128>(offset.count()) * rate;
        const std::int64_t sample = static_cast<std::int64_t>(num / 1000000 + ((num % 1000000) > 0 ? 1 : 0));
        return std::clamp<std::int64_t>(floor_div(sample, hop), 0, job_frames - 1);
    };
    const Micros guard = seconds_to_micros(config.guard_s(rate));
    const Micros reach = seconds_to_micros(det.max_train_duration_s);
    const UtcTime left_t = std::min(padded.t0, core.t0) - guard;
    const UtcTime right_t = std::max(padded.t1, core.t1 + reach) + guard;

    std::int64_t a = layout.begin(layout.index_of(frame_at(left_t - origin)));
    const std::int64_t e = layout.end(layout.index_of(frame_at(right_t - origin)));
    const std::int64_t core_frame = frame_at(core.t0 - origin);

    UnitOutput out;
    std::vector<detect::Pulse> pulses;
    std::size_t chain_start = 0;
    bool any_candidate = false;
    while (true) {
        any_candidate = false;
        const std::int64_t first_sample = j0 + a * hop;
        const std::int64_t count = (e - 1) * hop + params.fft_size - a * hop;
        auto span = extract_or_silence(manifest, channel, first_sample, count, rate);
        dsp::Spectrogram spec = dsp::stft(span.clip.samples, params, a);
        spec.start_utc = origin;
        for (std::int64_t b = layout.index_of(a); b < layout.count() && layout.begin(b) < e; ++b) {
            const auto lo = static_cast<std::size_t>(layout.begin(b) - a);
            const auto hi = static_cast<std::size_t>(layout.end(b) - a);
            const auto profile = dsp::estimate_noise_profile(spec, lo, hi);
            dsp::whiten_frames(spec, profile, lo, hi);
        }
        out.frames_analyzed += e - a;
        out.gaps = std::move(span.gaps);
        pulses = detect::detect_pulses(spec, det);

        // First pulse that could begin an owned train, and the start of its chain.
        auto begins_before_core = [&](const detect::Pulse& p) {
            return origin + seconds_to_micros(p.t0_s) < core.t0;
        };
        const auto it = std::find_if_not(pulses.begin(), pulses.end(), begins_before_core);
        if (it == pulses.end()) {
            break;
        }
        any_candidate = true;
        std::size_t s = static_cast<std::size_t>(it - pulses.begin());
        while (s > 0 && pulses[s].t_peak_s - pulses[s - 1].t_peak_s <= det.tau_max_s) {
            --s;
        }
        chain_start = s;
        if (a == 0) {
            break;
        }
        // Every pulse within tau_max before the chain start must be whole in
        // this window: runs that start after the first sub-threshold frame are.
        const auto means = detect::band_means(spec, det);
        const auto quiet = std::find_if(means.begin(), means.end(), [&](double v) { return !(v > det.threshold_k); });
        if (quiet != means.end()) {
            const double quiet_t = spec.frame_times_s[static_cast<std::size_t>(quiet - means.begin())];
            if (pulses[s].t_peak_s - det.tau_max_s > quiet_t) {
                break;
            }
        }
        const std::int64_t wider = std::max<std::int64_t>(0, core_frame - 2 * std::max<std::int64_t>(core_frame - a, 1));
        a = layout.begin(layout.index_of(wider));
        ++out.left_extensions;
    }
    if (!any_candidate) {
        return out;
    }

    const std::span<const detect::Pulse> tail(pulses.data() + chain_start, pulses.size() - chain_start);
    const std::string hash = config.config_hash();
    const std::string detector_id = config.detector_id();
    for (const auto& train : detect::group_pulse_trains(tail, det)) {
        const UtcTime begin = origin + seconds_to_micros(train.t0_s);
        if (!core.contains(begin)) {
            continue;
        }
        FeatureRow row;
        row.channel = channel;
        row.begin_utc = begin;
        row.end_utc = origin + seconds_to_micros(train.t1_s);
        row.n_pulses = train.n_pulses;
        row.f_lo_hz = train.f_lo_hz;
        row.f_hi_hz = train.f_hi_hz;
        row.features = detect::extract_features(train);
        if (config.model) {
            const auto c = detect::classify(*config.model, row.features, det.accept_p);
            row.p_signal = c.p_signal;
            row.accepted = c.accepted;
        }
        if (row.accepted) {
            store::EventRecord ev;
            ev.channel = channel;
            ev.begin_utc = row.begin_utc;
            ev.end_utc = row.end_utc;
            ev.begin_s = row.begin_utc - job_span.t0;
            ev.end_s = row.end_utc - job_span.t0;
            ev.f_lo_hz = row.f_lo_hz;
            ev.f_hi_hz = row.f_hi_hz;
            ev.n_pulses = row.n_pulses;
            ev.score = row.p_signal;
            ev.detector_id = detector_id;
            ev.config_hash = hash;
            ev.sources = sources_for(manifest, channel, ev.begin_utc, ev.end_utc);
            out.events.push_back(std::move(ev));
        }
        out.features.push_back(std::move(row));
    }
    return out;
}

UnitOutput analyze_single_pass(const audio::RecordingManifest& manifest, int channel, const TimeSpan& job_span,
                               const AnalysisConfig& config) {
    return analyze_unit(manifest, channel, job_span, job_span, job_span, config);
}

void write_features(std::ostream& out, const std::vector<FeatureRow>& rows) {
    out << "channel\tbegin_utc\tend_utc\tn_pulses\tf_lo_hz\tf_hi_hz";
    for (const char* name : detect::kFeatureNames) {
        out << '\t' << name;
    }
    out << "\tp_signal\taccepted\tlabel\n";
    for (const auto& r : rows) {
        out << r.channel << '\t' << format_iso8601(r.begin_utc) << '\t' << format_iso8601(r.end_utc) << '\t'
            << r.n_pulses << '\t' << store::format_real(r.f_lo_hz) << '\t' << store::format_real(r.f_hi_hz);
        for (double v : r.features.values) {
            out << '\t' << store::format_real(v);
        }
        out << '\t' << store::format_real(r.p_signal) << '\t' << bool_cell(r.accepted) << '\t'
            << store::escape_cell(r.label) << '\n';
    }
}

std::vector<FeatureRow> read_features(std::istream& in) {
    constexpr std::size_t n_cols = 6 + detect::kFeatureCount + 3;
    std::string line;
    if (!std::getline(in, line) || line.rfind("channel\tbegin_utc", 0) != 0) {
        throw Error(ErrorCode::format, "line 1: not a feature table header");
    }
    std::vector<FeatureRow> rows;
    std::size_t line_no = 1;
    auto fail = [&](const std::string& what) {
        throw Error(ErrorCode::format, "line " + std::to_string(line_no) + ": " + what);
    };
    auto real = [&](const std::string& s) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) {
            fail("invalid number '" + s + "'");
        }
        return v;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> c;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, '\t')) {
            c.push_back(cell);
        }
        if (line.back() == '\t') {
            c.emplace_back();
        }
        if (c.size() != n_cols) {
            fail("expected " + std::to_string(n_cols) + " columns, found " + std::to_string(c.size()));
        }
        FeatureRow r;
        r.channel = static_cast<int>(real(c[0]));
        auto t0 = parse_iso8601(c[1]);
        auto t1 = parse_iso8601(c[2]);
        if (!t0 || !t1) {
            fail("invalid timestamp");
        }
        r.begin_utc = *t0;
        r.end_utc = *t1;
        r.n_pulses = static_cast<int>(real(c[3]));
        r.f_lo_hz = real(c[4]);
        r.f_hi_hz = real(c[5]);
        for (std::size_t i = 0; i < detect::kFeatureCount; ++i) {
            r.features.values[i] = real(c[6 + i]);
        }
        r.p_signal = real(c[6 + detect::kFeatureCount]);
        const std::string& acc = c[7 + detect::kFeatureCount];
        if (acc != "0" && acc != "1") {
            fail("accepted must be 0 or 1");
        }
        r.accepted = acc == "1";
        r.label = store::unescape_cell(c[8 + detect::kFeatureCount]);
        rows.push_back(std::move(r));
    }
    return rows;
}

void save_features(const std::filesystem::path& path, const std::vector<FeatureRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
    }
    write_features(out, rows);
}

std::vector<FeatureRow> load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
    }
    return read_features(in);
}

bool is_signal_label(std::string_view label, bool bac1000_as_signal) {
    if (label == "signal") {
        return true;
    }
    if (!store::is_valid_tag(label) || store::is_noise_tag(label)) {
        return false;
    }
    return bac1000_as_signal || label != "Bac_1000";
}

void label_by_truth(std::vector<FeatureRow>& rows, const store::GroundTruthTable& truth, double min_overlap_fraction,
                    const std::string& unmatched_label) {
    const auto origin = rows.empty() ? UtcTime{} : rows.front().begin_utc;
    std::vector<store::Interval> det;
    for (const auto& r : rows) {
        det.push_back({r.channel, r.begin_utc - origin, r.end_utc - origin, 0.0});
    }
    std::vector<store::Interval> tru;
    for (const auto& t : truth.events()) {
        tru.push_back({t.channel, t.begin_utc - origin, t.end_utc - origin, 0.0});
    }
    const auto report = store::match_intervals(det, tru, min_overlap_fraction);
    for (auto& r : rows) {
        r.label = unmatched_label;
    }
    for (const auto& m : report.matches) {
        rows[m.detection].label = truth.events()[m.truth].label;
    }
}

} // namespace trainscan::pipeline
