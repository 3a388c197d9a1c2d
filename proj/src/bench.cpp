// SPDX-License-Identifier: Apache-2.0
#include "trainscan/bench.hpp"

#include "trainscan/error.hpp"
#include "trainscan/hash.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <sys/utsname.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

namespace trainscan::bench {

void evict_audio(const audio::RecordingManifest& manifest) {
    std::set<std::string> seen;
    for (const auto& e : manifest.entries()) {
        if (!seen.insert(e.path).second) continue;
        const int fd = ::open(e.path.c_str(), O_RDONLY);
        if (fd < 0) continue;
        ::fdatasync(fd);
        ::posix_fadvise(fd, 0, 0, POSIX_FADV_DONTNEED);
        ::close(fd);
    }
}

std::string host_descriptor() {
    std::ostringstream os;
    utsname u{};
    if (::uname(&u) == 0) {
        os << u.sysname << ' ' << u.release << ' ' << u.machine << ", ";
    }
    os << std::thread::hardware_concurrency() << " hardware threads";
    return os.str();
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

Report run_scaling(const sched::Job& job, std::vector<int> worker_counts, const Options& options) {
    if (worker_counts.empty()) {
        throw Error(ErrorCode::invalid_argument, "no worker counts given");
    }
    if (options.repeats < 1) {
        throw Error(ErrorCode::invalid_argument, "repeats must be at least 1");
    }
    for (int n : worker_counts) {
        if (n < 1) throw Error(ErrorCode::invalid_argument, "worker counts must be positive");
    }
    worker_counts.push_back(1);
    std::sort(worker_counts.begin(), worker_counts.end());
    worker_counts.erase(std::unique(worker_counts.begin(), worker_counts.end()), worker_counts.end());

    Report rep;
    rep.repeats = options.repeats;
    rep.manifest = job.manifest_path.string();
    rep.host = host_descriptor();
    rep.dataset_s = job.span.duration_s();
    rep.channels = job.channels.size();
    if (!job.channels.empty()) {
        rep.sample_rate_hz = job.manifest->sample_rate(job.channels.front());
    }

    for (int n : worker_counts) {
        Row row;
        row.n_workers = n;
        for (int r = 0; r < options.repeats; ++r) {
            if (options.drop_caches) {
                evict_audio(*job.manifest);
            }
            const auto t0 = std::chrono::steady_clock::now();
            const auto merged = sched::run_local(job, n, options.run);
            row.runs_s.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            const std::string digest = fnv1a_hex(store::write_table(merged.events));
            if (r == 0) {
                row.event_count = merged.events.size();
                row.table_digest = digest;
            } else if (digest != row.table_digest || merged.events.size() != row.event_count) {
                rep.failed = true;
                rep.failure += "repeat " + std::to_string(r + 1) + " at " + std::to_string(n) +
                               " workers produced " + std::to_string(merged.events.size()) + " events (digest " +
                               digest + "), first run " + std::to_string(row.event_count) + "; ";
            }
        }
        row.wall_s = median(row.runs_s);
        rep.rows.push_back(std::move(row));
    }
    const Row& base = rep.rows.front();
    for (auto& row : rep.rows) {
        row.speedup = row.wall_s > 0.0 ? base.wall_s / row.wall_s : 0.0;
        row.efficiency = row.speedup / row.n_workers;
        if (row.event_count != base.event_count || row.table_digest != base.table_digest) {
            rep.failed = true;
            rep.failure += std::to_string(row.n_workers) + " workers: " + std::to_string(row.event_count) +
                           " events (digest " + row.table_digest + ") vs " + std::to_string(base.event_count) +
                           " at 1 worker (digest " + base.table_digest + "); ";
        }
    }
    if (!rep.failure.empty()) {
        rep.failure.resize(rep.failure.size() - 2);
    }
    return rep;
}

std::string Report::to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows) {
        rows_j.push_back({{"n_workers", r.n_workers},
                          {"wall_s", r.wall_s},
                          {"runs_s", r.runs_s},
                          {"event_count", r.event_count},
                          {"table_digest", r.table_digest},
                          {"speedup", r.speedup},
                          {"efficiency", r.efficiency}});
    }
    nlohmann::json j{{"format", "trainscan.bench"},
                     {"version", 1},
                     {"status", failed ? "FAILED" : "ok"},
                     {"failure", failure},
                     {"dataset", {{"duration_s", dataset_s}, {"sample_rate_hz", sample_rate_hz}, {"channels", channels},
                                  {"manifest", manifest}}},
                     {"host", host},
                     {"repeats", repeats},
                     {"rows", rows_j}};
    return j.dump(2);
}

std::string Report::table() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "dataset %.0f s at %d Hz, %zu channel(s); host %s; median of %d\n", dataset_s,
                  sample_rate_hz, channels, host.c_str(), repeats);
    os << line;
    os << "workers    wall_s   speedup  efficiency  events  digest\n";
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%7d %9.2f %9.2f %11.2f %7zu  %s\n", r.n_workers, r.wall_s, r.speedup,
                      r.efficiency, r.event_count, r.table_digest.c_str());
        os << line;
    }
    os << (failed ? "FAILED: " + failure : std::string("event tables identical across worker counts")) << '\n';
    return os.str();
}

} // namespace trainscan::bench
