// SPDX-License-Identifier: Apache-2.0
#include "trainscan/diel.hpp"

#include "trainscan/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

namespace trainscan::diel {

using nlohmann::json;
using std::chrono::days;
using std::chrono::floor;
using std::chrono::sys_days;

namespace {

constexpr std::int64_t kDayMicros = 86'400'000'000LL;

// Categorical colours for tag layers, vocabulary order, then "untagged".
constexpr std::array<const char*, 12> kLayerColors = {
    "#1f77b4", "#08306b", "#7f7f7f", "#8c564b", "#2ca02c", "#ff7f0e",
    "#d62728", "#9467bd", "#e377c2", "#bcbd22", "#17becf", "#c7c7c7",
};

const char* layer_color(const std::string& name) {
    return kLayerColors[std::min(store::tag_order(name), kLayerColors.size() - 1)];
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

json rows_json(const std::vector<std::int64_t>& counts, std::size_t n_dates, int bins) {
    json rows = json::array();
    for (std::size_t d = 0; d < n_dates; ++d) {
        rows.push_back(std::vector<std::int64_t>(counts.begin() + static_cast<std::ptrdiff_t>(d * bins),
                                                 counts.begin() + static_cast<std::ptrdiff_t>((d + 1) * bins)));
    }
    return rows;
}

std::vector<std::int64_t> rows_from(const json& rows, std::size_t n_dates, int bins) {
    if (!rows.is_array() || rows.size() != n_dates) {
        throw Error(ErrorCode::format, "diel: count rows do not match the dates");
    }
    std::vector<std::int64_t> out;
    for (const auto& r : rows) {
        if (!r.is_array() || r.size() != static_cast<std::size_t>(bins)) {
            throw Error(ErrorCode::format, "diel: count row length does not match bins_per_day");
        }
        for (const auto& v : r) {
            const auto c = v.get<std::int64_t>();
            if (c < 0) {
                throw Error(ErrorCode::format, "diel: negative count");
            }
            out.push_back(c);
        }
    }
    return out;
}

} // namespace

std::string format_date(Date d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

Date parse_date(const std::string& text) {
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3) {
        throw Error(ErrorCode::format, "invalid date '" + text + "'");
    }
    const Date out{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!out.ok()) {
        throw Error(ErrorCode::format, "invalid date '" + text + "'");
    }
    return out;
}

std::int64_t DielGrid::total() const {
    std::int64_t t = 0;
    for (auto c : counts) {
        t += c;
    }
    return t;
}

std::int64_t DielGrid::max_count() const {
    return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
}

const Layer* DielGrid::layer(const std::string& name) const {
    for (const auto& l : layers) {
        if (l.name == name) {
            return &l;
        }
    }
    return nullptr;
}

DielGrid aggregate_diel(const std::vector<store::EventRecord>& events, const TimeSpan& span, Micros tz_offset,
                        bool layer_by_tag, int bins_per_day) {
    if (bins_per_day < 1 || kDayMicros % bins_per_day != 0 || (kDayMicros / bins_per_day) % 1'000'000 != 0) {
        throw Error(ErrorCode::invalid_argument, "bins_per_day must split a day into whole seconds");
    }
    DielGrid g;
    g.bins_per_day = bins_per_day;
    g.tz_offset = tz_offset;
    if (!(span.t0 < span.t1)) {
        return g;
    }
    const sys_days first = floor<days>(span.t0 + tz_offset);
    const sys_days last = floor<days>(span.t1 - Micros{1} + tz_offset);
    for (sys_days d = first; d <= last; d += days{1}) {
        g.dates.emplace_back(d);
    }
    const std::size_t cells = g.dates.size() * static_cast<std::size_t>(bins_per_day);
    g.counts.assign(cells, 0);
    const Micros bin_width{kDayMicros / bins_per_day};
    std::map<std::string, std::vector<std::int64_t>> layers;
    for (const auto& e : events) {
        if (!span.contains(e.begin_utc)) {
            throw Error(ErrorCode::out_of_range, "event " + std::to_string(e.event_id) + " begins outside the diel span");
        }
        const UtcTime local = e.begin_utc + tz_offset;
        const sys_days day = floor<days>(local);
        const auto row = static_cast<std::size_t>((day - first).count());
        const auto bin = static_cast<std::size_t>((local - day) / bin_width);
        const std::size_t cell = row * static_cast<std::size_t>(bins_per_day) + bin;
        ++g.counts[cell];
        if (layer_by_tag) {
            auto& l = layers[e.tag ? *e.tag : kUntagged];
            l.resize(cells, 0);
            ++l[cell];
        }
    }
    for (auto& [name, counts] : layers) {
        g.layers.push_back({name, std::move(counts)});
    }
    std::stable_sort(g.layers.begin(), g.layers.end(),
                     [](const Layer& a, const Layer& b) { return store::tag_order(a.name) < store::tag_order(b.name); });
    return g;
}

std::optional<TimeSpan> begin_extent(const std::vector<store::EventRecord>& events) {
    if (events.empty()) {
        return std::nullopt;
    }
    TimeSpan s{events.front().begin_utc, events.front().begin_utc};
    for (const auto& e : events) {
        s.t0 = std::min(s.t0, e.begin_utc);
        s.t1 = std::max(s.t1, e.begin_utc);
    }
    s.t1 += Micros{1};
    return s;
}

std::string export_diel(const DielGrid& g) {
    json j;
    j["format"] = "trainscan.diel";
    j["version"] = 1;
    j["bins_per_day"] = g.bins_per_day;
    j["tz_offset_s"] = static_cast<double>(g.tz_offset.count()) / 1e6;
    j["tz_offset_us"] = g.tz_offset.count();
    json dates = json::array();
    for (const auto& d : g.dates) {
        dates.push_back(format_date(d));
    }
    j["dates"] = dates;
    json bins = json::array();
    for (int b = 0; b < g.bins_per_day; ++b) {
        bins.push_back(24.0 * b / g.bins_per_day);
    }
    j["hours"] = bins;
    j["counts"] = rows_json(g.counts, g.dates.size(), g.bins_per_day);
    j["total"] = g.total();
    json layers = json::array();
    for (const auto& l : g.layers) {
        json lj{{"name", l.name}, {"total", 0}, {"counts", rows_json(l.counts, g.dates.size(), g.bins_per_day)}};
        std::int64_t t = 0;
        for (auto c : l.counts) {
            t += c;
        }
        lj["total"] = t;
        if (auto tag = store::find_tag(l.name)) {
            lj["description"] = std::string(tag->description);
        }
        layers.push_back(lj);
    }
    j["layers"] = layers;
    return j.dump();
}

DielGrid import_diel(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.value("format", std::string()) != "trainscan.diel" || j.value("version", 0) != 1) {
            throw Error(ErrorCode::format, "diel: unsupported format or version");
        }
        DielGrid g;
        g.bins_per_day = j.at("bins_per_day").get<int>();
        if (g.bins_per_day < 1) {
            throw Error(ErrorCode::format, "diel: bins_per_day must be positive");
        }
        g.tz_offset = Micros{j.at("tz_offset_us").get<std::int64_t>()};
        for (const auto& d : j.at("dates")) {
            g.dates.push_back(parse_date(d.get<std::string>()));
        }
        g.counts = rows_from(j.at("counts"), g.dates.size(), g.bins_per_day);
        for (const auto& lj : j.value("layers", json::array())) {
            g.layers.push_back({lj.at("name").get<std::string>(),
                                rows_from(lj.at("counts"), g.dates.size(), g.bins_per_day)});
        }
        return g;
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::format, std::string("diel: ") + ex.what());
    }
}

std::size_t ramp_index(std::int64_t count, std::int64_t max_count) {
    if (count <= 0 || max_count <= 0) {
        return 0;
    }
    const auto steps = static_cast<std::int64_t>(kRamp.size() - 1);
    return static_cast<std::size_t>(std::clamp<std::int64_t>((count * steps + max_count - 1) / max_count, 1, steps));
}

std::string render_svg(const DielGrid& g) {
    constexpr int cell_w = 18;
    constexpr int cell_h = 14;
    constexpr int left = 90;
    constexpr int top = 30;
    const int bins = g.bins_per_day;
    const int rows = static_cast<int>(g.dates.size());
    const int legend_h = 20 + 16 * static_cast<int>(g.layers.empty() ? 2 : g.layers.size());
    const int width = left + bins * cell_w + 20;
    const int height = top + std::max(rows, 1) * cell_h + 30 + legend_h;
    const std::int64_t max_count = g.max_count();

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    os << "<g class=\"axis-x\">\n";
    for (int b = 0; b < bins; ++b) {
        const double hour = 24.0 * b / bins;
        if (bins <= 24 || b % (bins / 24) == 0) {
            os << "<text x=\"" << left + b * cell_w + cell_w / 2 << "\" y=\"" << top - 6
               << "\" text-anchor=\"middle\">" << static_cast<int>(hour) << "</text>\n";
        }
    }
    os << "</g>\n<g class=\"axis-y\">\n";
    for (int r = 0; r < rows; ++r) {
        os << "<text x=\"" << left - 6 << "\" y=\"" << top + r * cell_h + cell_h - 3 << "\" text-anchor=\"end\">"
           << format_date(g.dates[static_cast<std::size_t>(r)]) << "</text>\n";
    }
    os << "</g>\n<g class=\"cells\">\n";
    for (int r = 0; r < rows; ++r) {
        for (int b = 0; b < bins; ++b) {
            const std::size_t cell = static_cast<std::size_t>(r) * bins + b;
            const std::int64_t c = g.counts[cell];
            std::string fill = kRamp[ramp_index(c, max_count)];
            double opacity = 1.0;
            if (!g.layers.empty() && c > 0) {
                const Layer* best = &g.layers.front();
                for (const auto& l : g.layers) {
                    if (l.counts[cell] > best->counts[cell]) {
                        best = &l;
                    }
                }
                fill = layer_color(best->name);
                opacity = 0.3 + 0.7 * static_cast<double>(c) / static_cast<double>(max_count);
            }
            os << "<rect x=\"" << left + b * cell_w << "\" y=\"" << top + r * cell_h << "\" width=\"" << cell_w
               << "\" height=\"" << cell_h << "\" fill=\"" << fill << "\"";
            if (opacity < 1.0) {
                char buf[16];
                std::snprintf(buf, sizeof buf, "%.3f", opacity);
                os << " fill-opacity=\"" << buf << "\"";
            }
            os << " stroke=\"#ffffff\" stroke-width=\"0.5\"><title>" << format_date(g.dates[static_cast<std::size_t>(r)])
               << ' ' << 24.0 * b / bins << "h: " << c << "</title></rect>\n";
        }
    }
    os << "</g>\n";
    const int grid_bottom = top + std::max(rows, 1) * cell_h;
    if (rows == 0) {
        os << "<text class=\"empty\" x=\"" << left + bins * cell_w / 2 << "\" y=\"" << top + cell_h
           << "\" text-anchor=\"middle\">no events</text>\n";
    }
    os << "<g class=\"legend\">\n";
    int y = grid_bottom + 24;
    if (g.layers.empty()) {
        os << "<text x=\"" << left << "\" y=\"" << y << "\">events per cell: 0 .. " << max_count << "</text>\n";
        for (std::size_t i = 0; i < kRamp.size(); ++i) {
            os << "<rect class=\"legend-ramp\" x=\"" << left + static_cast<int>(i) * cell_w << "\" y=\"" << y + 6
               << "\" width=\"" << cell_w << "\" height=\"10\" fill=\"" << kRamp[i] << "\"/>\n";
        }
    } else {
        for (const auto& l : g.layers) {
            const bool tag = store::is_valid_tag(l.name);
            const auto found = store::find_tag(l.name);
            os << "<g class=\"" << (tag ? "legend-tag" : "legend-untagged") << "\" data-name=\"" << xml_escape(l.name)
               << "\"><rect x=\"" << left << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
               << layer_color(l.name) << "\"/><text x=\"" << left + 16 << "\" y=\"" << y << "\">"
               << xml_escape(l.name) << (found ? " - " + xml_escape(std::string(found->description)) : std::string())
               << "</text></g>\n";
            y += 16;
        }
    }
    os << "</g>\n</svg>\n";
    return os.str();
}

} // namespace trainscan::diel
