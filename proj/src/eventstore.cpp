// SPDX-License-Identifier: Apache-2.0
#include "trainscan/eventstore.hpp"

#include "trainscan/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace trainscan::store {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return cells;
}

std::string_view strip_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') {
        s.remove_suffix(1);
    }
    return s;
}

[[noreturn]] void bad_row(std::size_t line, const std::string& what) {
    throw Error(ErrorCode::format, "line " + std::to_string(line) + ": " + what);
}

template <typename T>
T parse_int(std::string_view s, std::size_t line, const char* column) {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        bad_row(line, std::string("invalid ") + column + " '" + std::string(s) + "'");
    }
    return v;
}

double parse_real(std::string_view s, std::size_t line, const char* column) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        bad_row(line, std::string("invalid ") + column + " '" + std::string(s) + "'");
    }
    return v;
}

UtcTime parse_time(std::string_view s, std::size_t line, const char* column) {
    auto t = parse_iso8601(s);
    if (!t) {
        bad_row(line, std::string("invalid ") + column + " '" + std::string(s) + "'");
    }
    return *t;
}

Micros parse_offset(std::string_view s, std::size_t line, const char* column) {
    auto m = parse_seconds6(s);
    if (!m) {
        bad_row(line, std::string("invalid ") + column + " '" + std::string(s) + "'");
    }
    return *m;
}

std::string journal_line(const TagJournalEntry& e) {
    return format_iso8601(e.at) + "\t" + std::to_string(e.event_id) + "\t" + e.tag + "\t" +
           (e.previous ? *e.previous : "") + "\t" + escape_cell(e.annotator) + "\n";
}

} // namespace

std::optional<TagLabel> find_tag(std::string_view code) {
    for (const auto& t : kTagVocabulary) {
        if (t.code == code) {
            return t;
        }
    }
    return std::nullopt;
}

bool is_valid_tag(std::string_view code) { return find_tag(code).has_value(); }

std::size_t tag_order(std::string_view code) {
    for (std::size_t i = 0; i < kTagVocabulary.size(); ++i) {
        if (kTagVocabulary[i].code == code) {
            return i;
        }
    }
    return kTagVocabulary.size();
}

bool is_noise_tag(std::string_view code) { return code == "Ano_3100" || code == "Hdd_3100"; }

bool event_order(const EventRecord& a, const EventRecord& b) {
    return std::tie(a.channel, a.begin_utc, a.f_lo_hz, a.score, a.end_utc, a.f_hi_hz) <
           std::tie(b.channel, b.begin_utc, b.f_lo_hz, b.score, b.end_utc, b.f_hi_hz);
}

std::string escape_cell(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '\\': out += "\\\\"; break;
        case '\t': out += "\\t"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        default: out += c;
        }
    }
    return out;
}

std::string unescape_cell(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            const char n = s[++i];
            out += n == 't' ? '\t' : n == 'n' ? '\n' : n == 'r' ? '\r' : n;
        } else {
            out += s[i];
        }
    }
    return out;
}

std::string format_real(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

void write_table(std::ostream& out, const std::vector<EventRecord>& events) {
    for (std::size_t i = 0; i < kEventColumns.size(); ++i) {
        out << (i ? "\t" : "") << kEventColumns[i];
    }
    out << '\n';
    for (const auto& e : events) {
        if (e.tag && !is_valid_tag(*e.tag)) {
            throw Error(ErrorCode::invalid_argument, "event " + std::to_string(e.event_id) +
                                                         " carries unknown tag '" + *e.tag + "'");
        }
        std::string sources;
        for (std::size_t i = 0; i < e.sources.size(); ++i) {
            // ';' separates sources inside the cell
            std::string s = escape_cell(e.sources[i]);
            std::string escaped;
            for (char c : s) {
                if (c == ';') {
                    escaped += "\\;";
                } else {
                    escaped += c;
                }
            }
            sources += (i ? ";" : "") + escaped;
        }
        out << e.event_id << '\t' << e.channel << '\t' << format_iso8601(e.begin_utc) << '\t'
            << format_iso8601(e.end_utc) << '\t' << format_seconds6(e.begin_s) << '\t' << format_seconds6(e.end_s)
            << '\t' << format_real(e.f_lo_hz) << '\t' << format_real(e.f_hi_hz) << '\t' << e.n_pulses << '\t'
            << format_real(e.score) << '\t' << escape_cell(e.detector_id) << '\t' << escape_cell(e.config_hash)
            << '\t' << (e.tag ? *e.tag : "") << '\t' << escape_cell(e.annotator) << '\t' << sources << '\n';
    }
}

std::string write_table(const std::vector<EventRecord>& events) {
    std::ostringstream os;
    write_table(os, events);
    return os.str();
}

std::vector<EventRecord> read_table(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::format, "line 1: missing header");
    }
    const auto header = split_tabs(strip_cr(line));
    if (header.size() != kEventColumns.size() || !std::equal(header.begin(), header.end(), kEventColumns.begin())) {
        throw Error(ErrorCode::format, "line 1: header does not match the event table columns");
    }
    std::vector<EventRecord> events;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view row = strip_cr(line);
        if (row.empty()) {
            continue;
        }
        const auto c = split_tabs(row);
        if (c.size() != kEventColumns.size()) {
            bad_row(line_no, "expected " + std::to_string(kEventColumns.size()) + " columns, found " +
                                 std::to_string(c.size()));
        }
        EventRecord e;
        e.event_id = parse_int<std::uint64_t>(c[0], line_no, "event_id");
        e.channel = parse_int<int>(c[1], line_no, "channel");
        e.begin_utc = parse_time(c[2], line_no, "begin_utc");
        e.end_utc = parse_time(c[3], line_no, "end_utc");
        e.begin_s = parse_offset(c[4], line_no, "begin_s");
        e.end_s = parse_offset(c[5], line_no, "end_s");
        e.f_lo_hz = parse_real(c[6], line_no, "f_lo_hz");
        e.f_hi_hz = parse_real(c[7], line_no, "f_hi_hz");
        e.n_pulses = parse_int<int>(c[8], line_no, "n_pulses");
        e.score = parse_real(c[9], line_no, "score");
        e.detector_id = unescape_cell(c[10]);
        e.config_hash = unescape_cell(c[11]);
        if (!c[12].empty()) {
            if (!is_valid_tag(c[12])) {
                bad_row(line_no, "unknown tag code '" + std::string(c[12]) + "'");
            }
            e.tag = std::string(c[12]);
        }
        e.annotator = unescape_cell(c[13]);
        if (!c[14].empty()) {
            std::string cur;
            const std::string_view s = c[14];
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == ';') {
                    cur += ';';
                    ++i;
                } else if (s[i] == '\\' && i + 1 < s.size()) {
                    cur += s[i];
                    cur += s[++i];
                } else if (s[i] == ';') {
                    e.sources.push_back(unescape_cell(cur));
                    cur.clear();
                } else {
                    cur += s[i];
                }
            }
            e.sources.push_back(unescape_cell(cur));
        }
        if (!(e.begin_utc < e.end_utc)) {
            bad_row(line_no, "begin_utc must precede end_utc");
        }
        events.push_back(std::move(e));
    }
    return events;
}

std::vector<EventRecord> read_table_string(const std::string& text) {
    std::istringstream is(text);
    return read_table(is);
}

void save_table(const fs::path& path, const std::vector<EventRecord>& events) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) {
            throw Error(ErrorCode::io, "cannot write '" + tmp.string() + "'");
        }
        write_table(out, events);
        if (!out) {
            throw Error(ErrorCode::io, "write failed for '" + tmp.string() + "'");
        }
    }
    fs::rename(tmp, path);
}

std::vector<EventRecord> load_table(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
    }
    try {
        return read_table(in);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

EventStore::EventStore(std::vector<EventRecord> events)
    : events_(std::make_shared<const std::vector<EventRecord>>(std::move(events))) {}

EventStore::EventStore(fs::path table, fs::path journal)
    : events_(std::make_shared<const std::vector<EventRecord>>()),
      table_path_(std::move(table)),
      journal_path_(std::move(journal)) {
    if (fs::exists(*table_path_)) {
        events_ = std::make_shared<const std::vector<EventRecord>>(load_table(*table_path_));
    }
    if (fs::exists(*journal_path_)) {
        std::ifstream in(*journal_path_);
        std::string line;
        while (std::getline(in, line)) {
            const auto c = split_tabs(line);
            if (c.size() != 5) {
                continue;
            }
            TagJournalEntry e;
            e.at = parse_iso8601(c[0]).value_or(UtcTime{});
            e.event_id = std::strtoull(std::string(c[1]).c_str(), nullptr, 10);
            e.tag = std::string(c[2]);
            if (!c[3].empty()) {
                e.previous = std::string(c[3]);
            }
            e.annotator = unescape_cell(c[4]);
            journal_.push_back(std::move(e));
        }
    }
}

EventStore::Snapshot EventStore::snapshot() const {
    std::lock_guard lock(mutex_);
    return events_;
}

std::optional<EventRecord> EventStore::get(std::uint64_t event_id) const {
    const Snapshot snap = snapshot();
    for (const auto& e : *snap) {
        if (e.event_id == event_id) {
            return e;
        }
    }
    return std::nullopt;
}

void EventStore::persist_locked(const std::vector<EventRecord>& events) {
    if (table_path_) {
        save_table(*table_path_, events);
    }
}

EventRecord EventStore::set_tag(std::uint64_t event_id, std::string_view tag, std::string_view annotator,
                                UtcTime at) {
    if (!is_valid_tag(tag)) {
        throw Error(ErrorCode::invalid_argument, "unknown tag code '" + std::string(tag) + "'");
    }
    std::lock_guard lock(mutex_);
    auto next = std::make_shared<std::vector<EventRecord>>(*events_);
    auto it = std::find_if(next->begin(), next->end(), [&](const EventRecord& e) { return e.event_id == event_id; });
    if (it == next->end()) {
        throw Error(ErrorCode::not_found, "unknown event " + std::to_string(event_id));
    }
    TagJournalEntry entry{at, event_id, std::string(tag), it->tag, std::string(annotator)};
    it->tag = std::string(tag);
    it->annotator = std::string(annotator);
    const EventRecord updated = *it;
    if (journal_path_) {
        std::ofstream j(*journal_path_, std::ios::app | std::ios::binary);
        if (!j) {
            throw Error(ErrorCode::io, "cannot append to '" + journal_path_->string() + "'");
        }
        j << journal_line(entry);
    }
    persist_locked(*next);
    journal_.push_back(std::move(entry));
    events_ = std::move(next);
    return updated;
}

void EventStore::append(std::vector<EventRecord> events) {
    std::lock_guard lock(mutex_);
    auto next = std::make_shared<std::vector<EventRecord>>(*events_);
    std::uint64_t id = 1;
    for (const auto& e : *next) {
        id = std::max(id, e.event_id + 1);
    }
    for (auto& e : events) {
        e.event_id = id++;
        next->push_back(std::move(e));
    }
    persist_locked(*next);
    events_ = std::move(next);
}

void EventStore::replace(std::vector<EventRecord> events) {
    std::lock_guard lock(mutex_);
    auto next = std::make_shared<const std::vector<EventRecord>>(std::move(events));
    persist_locked(*next);
    events_ = std::move(next);
}

std::vector<TagJournalEntry> EventStore::journal() const {
    std::lock_guard lock(mutex_);
    return journal_;
}

GroundTruthTable::GroundTruthTable(std::vector<TruthEvent> events) : events_(std::move(events)) {
    std::stable_sort(events_.begin(), events_.end(), [](const TruthEvent& a, const TruthEvent& b) {
        return std::tie(a.channel, a.begin_utc) < std::tie(b.channel, b.begin_utc);
    });
}

void GroundTruthTable::write(std::ostream& out) const {
    out << "channel\tbegin_utc\tend_utc\tf_lo_hz\tf_hi_hz\tlabel\n";
    for (const auto& e : events_) {
        out << e.channel << '\t' << format_iso8601(e.begin_utc) << '\t' << format_iso8601(e.end_utc) << '\t'
            << format_real(e.f_lo_hz) << '\t' << format_real(e.f_hi_hz) << '\t' << escape_cell(e.label) << '\n';
    }
}

GroundTruthTable GroundTruthTable::read(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::format, "line 1: missing header");
    }
    const auto header = split_tabs(strip_cr(line));
    std::map<std::string, std::size_t, std::less<>> col;
    for (std::size_t i = 0; i < header.size(); ++i) {
        col.emplace(std::string(header[i]), i);
    }
    const bool tag_table = !col.count("label") && col.count("tag");
    for (const char* name : {"channel", "begin_utc", "end_utc"}) {
        if (!col.count(name)) {
            throw Error(ErrorCode::format, std::string("line 1: missing column '") + name + "'");
        }
    }
    if (!col.count("label") && !tag_table) {
        throw Error(ErrorCode::format, "line 1: missing column 'label'");
    }
    const std::size_t label_col = tag_table ? col["tag"] : col["label"];
    std::vector<TruthEvent> events;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view row = strip_cr(line);
        if (row.empty()) {
            continue;
        }
        const auto c = split_tabs(row);
        if (c.size() != header.size()) {
            bad_row(line_no, "expected " + std::to_string(header.size()) + " columns");
        }
        TruthEvent e;
        e.channel = parse_int<int>(c[col["channel"]], line_no, "channel");
        e.begin_utc = parse_time(c[col["begin_utc"]], line_no, "begin_utc");
        e.end_utc = parse_time(c[col["end_utc"]], line_no, "end_utc");
        if (col.count("f_lo_hz") && !c[col["f_lo_hz"]].empty()) {
            e.f_lo_hz = parse_real(c[col["f_lo_hz"]], line_no, "f_lo_hz");
        }
        if (col.count("f_hi_hz") && !c[col["f_hi_hz"]].empty()) {
            e.f_hi_hz = parse_real(c[col["f_hi_hz"]], line_no, "f_hi_hz");
        }
        e.label = unescape_cell(c[label_col]);
        if (tag_table && e.label.empty()) {
            continue;
        }
        if (!(e.begin_utc < e.end_utc)) {
            bad_row(line_no, "begin_utc must precede end_utc");
        }
        events.push_back(std::move(e));
    }
    return GroundTruthTable(std::move(events));
}

GroundTruthTable GroundTruthTable::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
    }
    return read(in);
}

void GroundTruthTable::save(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
    }
    write(out);
}

bool intervals_match(const Interval& a, const Interval& b, double fraction) {
    if (a.channel != b.channel) {
        return false;
    }
    const auto overlap = std::min(a.end, b.end) - std::max(a.begin, b.begin);
    if (overlap.count() <= 0) {
        return false;
    }
    const auto shorter = std::min(a.end - a.begin, b.end - b.begin);
    return static_cast<double>(overlap.count()) >= fraction * static_cast<double>(shorter.count());
}

ScoreReport match_intervals(const std::vector<Interval>& det, const std::vector<Interval>& truth,
                            double min_overlap_fraction) {
    const std::size_t nd = det.size();
    const std::size_t nt = truth.size();
    // candidate truths per detection, largest overlap first
    std::vector<std::vector<std::size_t>> adj(nd);
    for (std::size_t d = 0; d < nd; ++d) {
        for (std::size_t t = 0; t < nt; ++t) {
            if (intervals_match(det[d], truth[t], min_overlap_fraction)) {
                adj[d].push_back(t);
            }
        }
        auto overlap = [&](std::size_t t) {
            return std::min(det[d].end, truth[t].end) - std::max(det[d].begin, truth[t].begin);
        };
        std::stable_sort(adj[d].begin(), adj[d].end(),
                         [&](std::size_t a, std::size_t b) { return overlap(a) > overlap(b); });
    }
    std::vector<std::size_t> order(nd);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return det[a].score > det[b].score; });

    constexpr std::size_t none = static_cast<std::size_t>(-1);
    std::vector<std::size_t> truth_owner(nt, none);
    std::vector<char> visited(nt);
    auto augment = [&](auto&& self, std::size_t d) -> bool {
        for (std::size_t t : adj[d]) {
            if (visited[t]) {
                continue;
            }
            visited[t] = 1;
            if (truth_owner[t] == none || self(self, truth_owner[t])) {
                truth_owner[t] = d;
                return true;
            }
        }
        return false;
    };
    for (std::size_t d : order) {
        std::fill(visited.begin(), visited.end(), 0);
        augment(augment, d);
    }

    ScoreReport r;
    for (std::size_t t = 0; t < nt; ++t) {
        if (truth_owner[t] != none) {
            r.matches.push_back({truth_owner[t], t});
        }
    }
    std::sort(r.matches.begin(), r.matches.end(),
              [](const MatchedPair& a, const MatchedPair& b) { return a.detection < b.detection; });
    r.true_positives = r.matches.size();
    r.false_positives = nd - r.true_positives;
    r.false_negatives = nt - r.true_positives;
    r.precision = nd == 0 ? 1.0 : static_cast<double>(r.true_positives) / static_cast<double>(nd);
    r.recall = nt == 0 ? 1.0 : static_cast<double>(r.true_positives) / static_cast<double>(nt);
    return r;
}

std::vector<TruthEvent> signal_truth(const GroundTruthTable& truth, const ScoreOptions& options) {
    std::vector<TruthEvent> out;
    for (const auto& t : truth.events()) {
        if (is_noise_tag(t.label) || (!options.bac1000_as_signal && t.label == "Bac_1000")) {
            continue;
        }
        out.push_back(t);
    }
    return out;
}

ScoreReport match_and_score(const std::vector<EventRecord>& detections, const GroundTruthTable& truth,
                            const ScoreOptions& options) {
    std::vector<Interval> d;
    d.reserve(detections.size());
    for (const auto& e : detections) {
        d.push_back({e.channel, e.begin_utc.time_since_epoch(), e.end_utc.time_since_epoch(), e.score});
    }
    std::vector<Interval> t;
    for (const auto& e : signal_truth(truth, options)) {
        t.push_back({e.channel, e.begin_utc.time_since_epoch(), e.end_utc.time_since_epoch(), 0.0});
    }
    return match_intervals(d, t, options.min_overlap_fraction);
}

} // namespace trainscan::store
