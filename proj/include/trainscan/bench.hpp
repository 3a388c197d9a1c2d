// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "trainscan/scheduler.hpp"

#include <string>
#include <vector>

namespace trainscan::bench {

struct Row {
    int n_workers = 0;
    double wall_s = 0.0;              ///< median over repeats
    std::vector<double> runs_s;
    std::size_t event_count = 0;
    std::string table_digest;         ///< FNV-1a of the event table TSV
    double speedup = 1.0;             ///< wall(1) / wall(n)
    double efficiency = 1.0;          ///< speedup / n
};

struct Report {
    std::vector<Row> rows;            ///< ascending worker count, always including 1
    double dataset_s = 0.0;
    int sample_rate_hz = 0;
    std::size_t channels = 0;
    std::string manifest;
    std::string host;
    int repeats = 0;
    bool failed = false;
    std::string failure;              ///< the differing counts or digests

    std::string to_json() const;
    std::string table() const;
};

struct Options {
    int repeats = 3;
    bool drop_caches = true;
    sched::LocalRunOptions run;
};

/// Runs the job once per repeat for every worker count (plus a one-worker
/// baseline when absent) and compares the resulting tables.
Report run_scaling(const sched::Job& job, std::vector<int> worker_counts, const Options& options = {});

/// Asks the kernel to drop cached pages of the job's audio files.
void evict_audio(const audio::RecordingManifest& manifest);

std::string host_descriptor();

} // namespace trainscan::bench
