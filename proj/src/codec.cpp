// SPDX-License-Identifier: Apache-2.0
#include "trainscan/codec.hpp"

#include "trainscan/error.hpp"

namespace trainscan::codec {

namespace {

UtcTime time_from(const json& j) { return parse_iso8601_or_throw(j.get<std::string>()); }

} // namespace

json to_json(const store::EventRecord& e) {
    json j{
        {"event_id", e.event_id},
        {"channel", e.channel},
        {"begin_utc", format_iso8601(e.begin_utc)},
        {"end_utc", format_iso8601(e.end_utc)},
        {"begin_s", micros_to_seconds(e.begin_s)},
        {"end_s", micros_to_seconds(e.end_s)},
        {"f_lo_hz", e.f_lo_hz},
        {"f_hi_hz", e.f_hi_hz},
        {"n_pulses", e.n_pulses},
        {"score", e.score},
        {"detector_id", e.detector_id},
        {"config_hash", e.config_hash},
        {"tag", e.tag ? json(*e.tag) : json(nullptr)},
        {"annotator", e.annotator},
        {"sources", e.sources},
    };
    if (e.tag) {
        if (auto t = store::find_tag(*e.tag)) {
            j["tag_description"] = std::string(t->description);
        }
    }
    return j;
}

store::EventRecord event_from_json(const json& j) {
    store::EventRecord e;
    e.event_id = j.value("event_id", std::uint64_t{0});
    e.channel = j.at("channel").get<int>();
    e.begin_utc = time_from(j.at("begin_utc"));
    e.end_utc = time_from(j.at("end_utc"));
    e.begin_s = seconds_to_micros(j.at("begin_s").get<double>());
    e.end_s = seconds_to_micros(j.at("end_s").get<double>());
    e.f_lo_hz = j.at("f_lo_hz").get<double>();
    e.f_hi_hz = j.at("f_hi_hz").get<double>();
    e.n_pulses = j.at("n_pulses").get<int>();
    e.score = j.at("score").get<double>();
    e.detector_id = j.value("detector_id", std::string());
    e.config_hash = j.value("config_hash", std::string());
    if (j.contains("tag") && !j.at("tag").is_null()) {
        e.tag = j.at("tag").get<std::string>();
        if (!store::is_valid_tag(*e.tag)) {
            throw Error(ErrorCode::format, "unknown tag code '" + *e.tag + "'");
        }
    }
    e.annotator = j.value("annotator", std::string());
    e.sources = j.value("sources", std::vector<std::string>{});
    return e;
}

json to_json(const pipeline::FeatureRow& r) {
    return json{
        {"channel", r.channel},
        {"begin_utc", format_iso8601(r.begin_utc)},
        {"end_utc", format_iso8601(r.end_utc)},
        {"n_pulses", r.n_pulses},
        {"f_lo_hz", r.f_lo_hz},
        {"f_hi_hz", r.f_hi_hz},
        {"features", r.features.values},
        {"p_signal", r.p_signal},
        {"accepted", r.accepted},
        {"label", r.label},
    };
}

pipeline::FeatureRow feature_row_from_json(const json& j) {
    pipeline::FeatureRow r;
    r.channel = j.at("channel").get<int>();
    r.begin_utc = time_from(j.at("begin_utc"));
    r.end_utc = time_from(j.at("end_utc"));
    r.n_pulses = j.at("n_pulses").get<int>();
    r.f_lo_hz = j.at("f_lo_hz").get<double>();
    r.f_hi_hz = j.at("f_hi_hz").get<double>();
    r.features.values = j.at("features").get<std::array<double, detect::kFeatureCount>>();
    r.p_signal = j.at("p_signal").get<double>();
    r.accepted = j.at("accepted").get<bool>();
    r.label = j.value("label", std::string());
    return r;
}

json to_json(const TimeSpan& s) { return json::array({format_iso8601(s.t0), format_iso8601(s.t1)}); }

TimeSpan span_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2) {
        throw Error(ErrorCode::format, "a span is a [t0, t1] pair of timestamps");
    }
    return TimeSpan{time_from(j[0]), time_from(j[1])};
}

json to_json(const sched::WorkUnit& u) {
    return json{{"unit_id", u.unit_id},
                {"channel", u.channel},
                {"core", to_json(u.core)},
                {"padded", to_json(u.padded)},
                {"attempt", u.attempt}};
}

sched::WorkUnit unit_from_json(const json& j) {
    sched::WorkUnit u;
    u.unit_id = j.at("unit_id").get<std::size_t>();
    u.channel = j.at("channel").get<int>();
    u.core = span_from_json(j.at("core"));
    u.padded = span_from_json(j.at("padded"));
    u.attempt = j.at("attempt").get<int>();
    return u;
}

json to_json(const sched::JobStatus& s) {
    json workers = json::array();
    for (const auto& w : s.workers) {
        workers.push_back({{"worker_id", w.worker_id},
                           {"capacity", w.capacity},
                           {"assigned", w.assigned},
                           {"status", sched::to_string(w.status)},
                           {"completed", w.completed}});
    }
    return json{{"job_id", s.job_id},
                {"state", sched::to_string(s.state)},
                {"units_total", s.units_total},
                {"units_done", s.units_done},
                {"discarded_results", s.discarded_results},
                {"error", s.error},
                {"workers", workers}};
}

} // namespace trainscan::codec
