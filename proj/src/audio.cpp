// SPDX-License-Identifier: Apache-2.0
#include "trainscan/audio.hpp"

#include "trainscan/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

namespace trainscan::audio {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t le32(const char* p) {
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    return v;
}

std::uint16_t le16(const char* p) {
    std::uint16_t v;
    std::memcpy(&v, p, 2);
    return v;
}

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

int bytes_per_sample(SampleFormat f) { return f == SampleFormat::pcm16 ? 2 : 4; }

std::string path_string(const fs::path& p) { return p.string(); }

} // namespace

std::optional<FileNameInfo> parse_file_name(const std::string& file_name) {
    static const std::regex pattern(R"(^([A-Za-z0-9\-]+)_(?:ch|CH)?([0-9]+)_([0-9T:\-\.Zz]+)\.wav$)",
                                    std::regex::icase);
    std::smatch m;
    if (!std::regex_match(file_name, m, pattern)) {
        return std::nullopt;
    }
    auto start = parse_iso8601(m[3].str());
    if (!start) {
        return std::nullopt;
    }
    FileNameInfo info;
    info.station = m[1].str();
    info.channel_id = std::stoi(m[2].str());
    info.start_utc = *start;
    return info;
}

std::string make_file_name(const std::string& station, int channel_id, UtcTime start) {
    // basic ISO form keeps the name free of ':'
    std::string iso = format_iso8601(start);
    iso.erase(std::remove(iso.begin(), iso.end(), '-'), iso.end());
    iso.erase(std::remove(iso.begin(), iso.end(), ':'), iso.end());
    return station + "_" + std::to_string(channel_id) + "_" + iso + ".wav";
}

WavInfo read_wav_info(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open '" + path_string(path) + "'");
    }
    char hdr[12];
    if (!in.read(hdr, 12) || std::memcmp(hdr, "RIFF", 4) != 0 || std::memcmp(hdr + 8, "WAVE", 4) != 0) {
        throw Error(ErrorCode::format, "'" + path_string(path) + "' is not a RIFF/WAVE file");
    }
    WavInfo info;
    bool have_fmt = false;
    int bits = 0;
    int tag = 0;
    std::uint64_t offset = 12;
    while (true) {
        char ch[8];
        if (!in.read(ch, 8)) {
            break;
        }
        offset += 8;
        const std::uint32_t size = le32(ch + 4);
        if (std::memcmp(ch, "fmt ", 4) == 0) {
            std::vector<char> body(size);
            if (size < 16 || !in.read(body.data(), size)) {
                throw Error(ErrorCode::format, "'" + path_string(path) + "': truncated fmt chunk");
            }
            tag = le16(body.data());
            info.channels = le16(body.data() + 2);
            info.sample_rate_hz = static_cast<int>(le32(body.data() + 4));
            bits = le16(body.data() + 14);
            if (tag == 0xFFFE && size >= 40) {
                tag = le16(body.data() + 24); // sub-format GUID leads with the format tag
            }
            have_fmt = true;
            if (size & 1u) {
                in.seekg(1, std::ios::cur);
            }
            offset += size + (size & 1u);
        } else if (std::memcmp(ch, "data", 4) == 0) {
            if (!have_fmt) {
                throw Error(ErrorCode::format, "'" + path_string(path) + "': data before fmt chunk");
            }
            if (tag == 1 && bits == 16) {
                info.format = SampleFormat::pcm16;
            } else if (tag == 3 && bits == 32) {
                info.format = SampleFormat::float32;
            } else {
                throw Error(ErrorCode::format, "'" + path_string(path) + "': unsupported encoding (tag " +
                                                   std::to_string(tag) + ", " + std::to_string(bits) +
                                                   " bits)");
            }
            if (info.channels <= 0 || info.sample_rate_hz <= 0) {
                throw Error(ErrorCode::format, "'" + path_string(path) + "': invalid fmt chunk");
            }
            const std::uint64_t block = static_cast<std::uint64_t>(info.channels) * (bits / 8);
            info.frames = static_cast<std::int64_t>(size / block);
            info.data_offset = offset;
            if (info.frames == 0) {
                throw Error(ErrorCode::format, "'" + path_string(path) + "': zero-length audio");
            }
            return info;
        } else {
            in.seekg(size + (size & 1u), std::ios::cur);
            offset += size + (size & 1u);
        }
    }
    throw Error(ErrorCode::format, "'" + path_string(path) + "': no data chunk");
}

std::vector<float> read_wav_frames(const fs::path& path, std::int64_t first, std::int64_t count,
                                   int channel_index) {
    const WavInfo info = read_wav_info(path);
    if (channel_index < 0 || channel_index >= info.channels) {
        throw Error(ErrorCode::invalid_argument, "'" + path_string(path) + "' has no channel " +
                                                     std::to_string(channel_index));
    }
    if (first < 0 || count < 0 || first + count > info.frames) {
        throw Error(ErrorCode::out_of_range, "'" + path_string(path) + "': frame range outside file");
    }
    const int bps = bytes_per_sample(info.format);
    const std::size_t block = static_cast<std::size_t>(info.channels) * bps;
    std::vector<char> raw(static_cast<std::size_t>(count) * block);
    std::ifstream in(path, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(info.data_offset + static_cast<std::uint64_t>(first) * block));
    if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) {
        throw Error(ErrorCode::io, "'" + path_string(path) + "': short read");
    }
    std::vector<float> out(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < out.size(); ++i) {
        const char* p = raw.data() + i * block + static_cast<std::size_t>(channel_index) * bps;
        if (info.format == SampleFormat::pcm16) {
            std::int16_t s;
            std::memcpy(&s, p, 2);
            out[i] = static_cast<float>(s) / 32768.0f;
        } else {
            std::memcpy(&out[i], p, 4);
        }
    }
    return out;
}

AudioClip read_wav(const fs::path& path, int channel_index) {
    const WavInfo info = read_wav_info(path);
    AudioClip clip;
    clip.samples = read_wav_frames(path, 0, info.frames, channel_index);
    clip.sample_rate_hz = info.sample_rate_hz;
    if (auto named = parse_file_name(path.filename().string())) {
        clip.start_utc = named->start_utc;
        clip.channel_id = named->channel_id;
    }
    return clip;
}

void write_wav(const fs::path& path, const AudioClip& clip, SampleFormat format) {
    if (clip.samples.empty() || clip.sample_rate_hz <= 0) {
        throw Error(ErrorCode::invalid_argument, "cannot write an empty clip");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::io, "cannot create '" + path_string(path) + "'");
    }
    const int bps = bytes_per_sample(format);
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * bps);
    out.write("RIFF", 4);
    put<std::uint32_t>(out, 36 + data_bytes);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put<std::uint32_t>(out, 16);
    put<std::uint16_t>(out, format == SampleFormat::pcm16 ? 1 : 3);
    put<std::uint16_t>(out, 1);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate_hz * bps));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(bps));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(bps * 8));
    out.write("data", 4);
    put<std::uint32_t>(out, data_bytes);
    if (format == SampleFormat::pcm16) {
        std::vector<std::int16_t> pcm(clip.samples.size());
        for (std::size_t i = 0; i < pcm.size(); ++i) {
            const double v = std::nearbyint(static_cast<double>(clip.samples[i]) * 32768.0);
            pcm[i] = static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
        }
        out.write(reinterpret_cast<const char*>(pcm.data()),
                  static_cast<std::streamsize>(pcm.size() * 2));
    } else {
        out.write(reinterpret_cast<const char*>(clip.samples.data()),
                  static_cast<std::streamsize>(clip.samples.size() * 4));
    }
    if (!out) {
        throw Error(ErrorCode::io, "write failed for '" + path_string(path) + "'");
    }
}

RecordingManifest::RecordingManifest(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) {
    for (const auto& e : entries_) {
        if (e.sample_rate_hz <= 0 || e.n_samples <= 0 || e.channel_id < 0) {
            throw Error(ErrorCode::invalid_argument, "manifest entry '" + e.path + "' is invalid");
        }
        by_channel_[e.channel_id].push_back(e);
    }
    for (auto& [ch, list] : by_channel_) {
        std::sort(list.begin(), list.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
            return a.first_index() < b.first_index() ||
                   (a.first_index() == b.first_index() && a.path < b.path);
        });
        for (std::size_t i = 1; i < list.size(); ++i) {
            if (list[i].sample_rate_hz != list[0].sample_rate_hz) {
                throw Error(ErrorCode::invalid_argument,
                            "channel " + std::to_string(ch) + " mixes sample rates: '" + list[0].path +
                                "' (" + std::to_string(list[0].sample_rate_hz) + " Hz) and '" +
                                list[i].path + "' (" + std::to_string(list[i].sample_rate_hz) + " Hz)");
            }
            if (list[i - 1].end_index() > list[i].first_index()) {
                throw Error(ErrorCode::overlap, "channel " + std::to_string(ch) + ": '" +
                                                    list[i - 1].path + "' overlaps '" + list[i].path + "'");
            }
        }
    }
    std::sort(entries_.begin(), entries_.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
        return std::tie(a.channel_id, a.start_utc, a.path) < std::tie(b.channel_id, b.start_utc, b.path);
    });
}

std::vector<int> RecordingManifest::channels() const {
    std::vector<int> out;
    for (const auto& [ch, list] : by_channel_) {
        out.push_back(ch);
    }
    return out;
}

const std::vector<ManifestEntry>& RecordingManifest::channel(int channel_id) const {
    auto it = by_channel_.find(channel_id);
    if (it == by_channel_.end()) {
        throw Error(ErrorCode::not_found, "unknown channel " + std::to_string(channel_id));
    }
    return it->second;
}

int RecordingManifest::sample_rate(int channel_id) const { return channel(channel_id).front().sample_rate_hz; }

TimeSpan RecordingManifest::channel_extent(int channel_id) const {
    const auto& list = channel(channel_id);
    const int rate = list.front().sample_rate_hz;
    return TimeSpan{sample_time(list.front().first_index(), rate), sample_time(list.back().end_index(), rate)};
}

std::string RecordingManifest::to_json() const {
    json doc;
    doc["format"] = "trainscan.manifest";
    doc["version"] = 1;
    doc["entries"] = json::array();
    for (const auto& e : entries_) {
        doc["entries"].push_back({{"path", e.path},
                                  {"station", e.station},
                                  {"channel_id", e.channel_id},
                                  {"start_utc", format_iso8601(e.start_utc)},
                                  {"duration_s", e.duration_s()},
                                  {"n_samples", e.n_samples},
                                  {"sample_rate_hz", e.sample_rate_hz},
                                  {"file_channel", e.file_channel}});
    }
    return doc.dump(2) + "\n";
}

RecordingManifest RecordingManifest::from_json(const std::string& text) {
    std::vector<ManifestEntry> entries;
    try {
        const json doc = json::parse(text);
        for (const auto& j : doc.at("entries")) {
            ManifestEntry e;
            e.path = j.at("path").get<std::string>();
            e.station = j.value("station", std::string{});
            e.channel_id = j.at("channel_id").get<int>();
            e.start_utc = parse_iso8601_or_throw(j.at("start_utc").get<std::string>());
            e.sample_rate_hz = j.at("sample_rate_hz").get<int>();
            if (j.contains("n_samples")) {
                e.n_samples = j.at("n_samples").get<std::int64_t>();
            } else {
                e.n_samples = std::llround(j.at("duration_s").get<double>() * e.sample_rate_hz);
            }
            e.file_channel = j.value("file_channel", 0);
            entries.push_back(std::move(e));
        }
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::format, std::string("manifest: ") + ex.what());
    }
    return RecordingManifest(std::move(entries));
}

void RecordingManifest::save(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::io, "cannot write '" + path_string(path) + "'");
    }
    out << to_json();
}

RecordingManifest RecordingManifest::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open '" + path_string(path) + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    RecordingManifest m = from_json(ss.str());
    const fs::path base = path.parent_path();
    std::vector<ManifestEntry> entries = m.entries_;
    bool changed = false;
    for (auto& e : entries) {
        if (fs::path(e.path).is_relative() && !base.empty()) {
            e.path = (base / e.path).lexically_normal().string();
            changed = true;
        }
    }
    return changed ? RecordingManifest(std::move(entries)) : m;
}

RecordingManifest build_manifest(const fs::path& root) {
    if (!fs::is_directory(root)) {
        throw Error(ErrorCode::io, "'" + path_string(root) + "' is not a directory");
    }
    const fs::path sidecar = root / "manifest.json";
    if (fs::exists(sidecar)) {
        return RecordingManifest::load(sidecar);
    }
    std::vector<fs::path> files;
    for (const auto& de : fs::directory_iterator(root)) {
        if (de.is_regular_file() && parse_file_name(de.path().filename().string())) {
            files.push_back(de.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<ManifestEntry> entries;
    for (const auto& f : files) {
        const auto named = *parse_file_name(f.filename().string());
        const WavInfo info = read_wav_info(f);
        ManifestEntry e;
        e.path = fs::absolute(f).lexically_normal().string();
        e.station = named.station;
        e.channel_id = named.channel_id;
        e.start_utc = named.start_utc;
        e.n_samples = info.frames;
        e.sample_rate_hz = info.sample_rate_hz;
        entries.push_back(std::move(e));
    }
    return RecordingManifest(std::move(entries));
}

ExtractedSpan extract_samples(const RecordingManifest& manifest, int channel_id, std::int64_t first,
                              std::int64_t count) {
    const auto& list = manifest.channel(channel_id);
    if (count <= 0) {
        throw Error(ErrorCode::invalid_argument, "extract: empty sample range");
    }
    const int rate = list.front().sample_rate_hz;
    const std::int64_t last = first + count;
    ExtractedSpan out;
    out.clip.sample_rate_hz = rate;
    out.clip.channel_id = channel_id;
    out.clip.start_utc = sample_time(first, rate);
    out.clip.samples.assign(static_cast<std::size_t>(count), 0.0f);

    std::int64_t cursor = first; // end of covered region so far
    bool any = false;
    auto add_gap = [&](std::int64_t a, std::int64_t b) {
        if (a < b) {
            out.gaps.push_back(TimeSpan{sample_time(a, rate), sample_time(b, rate)});
        }
    };
    for (const auto& e : list) {
        const std::int64_t a = std::max(first, e.first_index());
        const std::int64_t b = std::min(last, e.end_index());
        if (a >= b) {
            continue;
        }
        any = true;
        add_gap(cursor, a);
        const auto chunk = read_wav_frames(e.path, a - e.first_index(), b - a, e.file_channel);
        std::copy(chunk.begin(), chunk.end(), out.clip.samples.begin() + (a - first));
        out.sources.push_back(e.path);
        cursor = b;
    }
    if (!any) {
        throw Error(ErrorCode::out_of_range, "channel " + std::to_string(channel_id) +
                                                 ": requested range lies outside the recorded timeline");
    }
    add_gap(cursor, last);
    return out;
}

ExtractedSpan extract_span(const RecordingManifest& manifest, int channel_id, const TimeSpan& span) {
    const int rate = manifest.sample_rate(channel_id);
    const std::int64_t a = sample_index_at_or_after(span.t0, rate);
    const std::int64_t b = sample_index_at_or_after(span.t1, rate);
    if (b <= a) {
        throw Error(ErrorCode::invalid_argument, "extract: span shorter than one sample");
    }
    return extract_samples(manifest, channel_id, a, b - a);
}

} // namespace trainscan::audio
