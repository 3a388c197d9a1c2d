// SPDX-License-Identifier: Apache-2.0
#pragma once

// Client API: jobs, events, thumbnails, tags and diel grids over HTTP/JSON.
//
//   POST /jobs                    submit          {manifest, channels?, t0?, t1?, config?, chunking?, local_workers?}
//   GET  /jobs, /jobs/{id}        read            ?events=1, ?features=1 add the job's events, trains
//   GET  /events                  read            t0 t1 channel tag min_score limit offset
//   GET  /events/{id}             read
//   GET  /events/{id}/thumbnail   read            width height -> image/png
//   PUT  /events/{id}/tag         annotate        {tag, annotator?}
//   GET  /diel                    read            event filters plus layered tz bins
//   GET  /tags                    read
//
// Clients identify themselves with X-Client-Id.

#include "trainscan/eventstore.hpp"
#include "trainscan/net/thumbnail.hpp"
#include "trainscan/pipeline.hpp"
#include "trainscan/scheduler.hpp"

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace trainscan::net {

enum class Permission { read, annotate, submit };
std::string to_string(Permission p);

/// Static permission table: {"default": ["read"], "clients": {"id": ["read", "annotate", "submit"]}}.
/// Without a file every client may do everything.
class AccessPolicy {
public:
    static AccessPolicy open();
    static AccessPolicy load(const std::filesystem::path& path);
    static AccessPolicy from_json(const std::string& text);

    bool allows(const std::string& client, Permission p) const;

private:
    bool open_ = true;
    std::set<Permission> default_;
    std::map<std::string, std::set<Permission>> clients_;
};

struct JobRequest {
    std::filesystem::path manifest;
    std::vector<int> channels;
    std::optional<TimeSpan> span;
    std::optional<pipeline::AnalysisConfig> config;
    sched::Chunking chunking;
    int local_workers = 1; ///< 0: remote workers only
};

struct JobInfo {
    std::string job_id;
    std::string state; ///< queued, running, completed, failed
    std::string manifest;
    std::optional<sched::JobStatus> status;
    std::uint64_t first_event_id = 0;
    std::size_t event_count = 0;
    std::string error;
};

/// Runs submitted jobs one at a time (FIFO) and appends their events to the
/// store under `root` (events.tsv, tag_journal.tsv, jobs.json).
class JobService {
public:
    JobService(std::filesystem::path root, pipeline::AnalysisConfig default_config,
               sched::LocalRunOptions run_options = {});
    ~JobService();
    JobService(const JobService&) = delete;
    JobService& operator=(const JobService&) = delete;

    /// Validates and queues. Throws Error(invalid_argument|not_found|...).
    std::string submit(JobRequest request);
    std::optional<JobInfo> info(const std::string& job_id) const;
    std::vector<JobInfo> list() const;
    /// Head node of the running job, for the worker control server.
    std::shared_ptr<sched::HeadNode> current_head() const;
    /// Waits until every queued job has ended.
    bool wait_idle(std::chrono::milliseconds timeout) const;

    store::EventStore& store() { return *store_; }
    /// Manifest of the job that produced an event, if known.
    std::shared_ptr<const audio::RecordingManifest> manifest_for_event(std::uint64_t event_id) const;
    /// Every train the job detected (accepted or not); empty until it completes.
    std::vector<pipeline::FeatureRow> features(const std::string& job_id) const;

    void shutdown();

private:
    struct Entry {
        JobInfo info;
        std::optional<sched::Job> job;
        int local_workers = 1;
    };

    void run_loop();
    void persist_locked() const;

    std::filesystem::path root_;
    pipeline::AnalysisConfig default_config_;
    sched::LocalRunOptions run_options_;
    std::unique_ptr<store::EventStore> store_;
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::vector<Entry> jobs_;
    std::deque<std::size_t> queue_;
    std::shared_ptr<sched::HeadNode> current_;
    bool stopping_ = false;
    bool busy_ = false;
    std::size_t next_id_ = 1;
    mutable std::map<std::string, std::shared_ptr<const audio::RecordingManifest>> manifests_;
    std::thread runner_;
};

/// Events matching the query filters, in table order. Throws
/// Error(invalid_argument) on a malformed filter.
struct EventFilter {
    std::optional<UtcTime> t0;
    std::optional<UtcTime> t1;
    std::optional<int> channel;
    std::optional<std::string> tag; ///< a code or "untagged"
    std::optional<double> min_score;

    bool matches(const store::EventRecord& e) const;
};

struct ApiOptions {
    AccessPolicy policy = AccessPolicy::open();
    /// Used for thumbnails of events no job in this service produced.
    std::shared_ptr<const audio::RecordingManifest> fallback_manifest;
    std::size_t default_limit = 1000;
};

class ApiServer {
public:
    ApiServer(JobService& jobs, ApiOptions options = {});
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds and serves on a background thread; port 0 picks one. Returns the port.
    int start(const std::string& host, int port);
    void stop();

private:
    void routes();

    JobService& jobs_;
    ApiOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

} // namespace trainscan::net
