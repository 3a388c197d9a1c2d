// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "trainscan/audio.hpp"
#include "trainscan/eventstore.hpp"
#include "trainscan/pipeline.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace trainscan::sched {

using Clock = std::chrono::steady_clock;

struct Chunking {
    double unit_core_s = 600.0;
    double overlap_s = 60.0;

    friend bool operator==(const Chunking&, const Chunking&) = default;
};

struct Job {
    std::string job_id = "job";
    std::filesystem::path manifest_path; ///< what remote workers open; may be empty for local runs
    std::shared_ptr<const audio::RecordingManifest> manifest;
    std::vector<int> channels;
    TimeSpan span{};                     ///< t0 == t1 is an empty job
    pipeline::AnalysisConfig config;
    Chunking chunking;

    /// overlap >= max_train_duration, core > 0, channels known to the manifest.
    void validate() const;
    bool empty() const { return !(span.t0 < span.t1); }
};

/// Loads the manifest and fills a job over its full extent on `channels`
/// (all channels when empty).
Job make_job(const std::filesystem::path& manifest_path, std::vector<int> channels, pipeline::AnalysisConfig config,
             Chunking chunking = {}, std::optional<TimeSpan> span = std::nullopt);

struct WorkUnit {
    std::size_t unit_id = 0;
    int channel = 0;
    TimeSpan core{};
    TimeSpan padded{};
    int attempt = 0;

    friend bool operator==(const WorkUnit&, const WorkUnit&) = default;
};

/// Per channel, ceil(span / unit_core) cores partitioning the span (the last
/// truncated) with padded spans clipped to it; ordered by (channel, core start).
std::vector<WorkUnit> plan_units(const Job& job);

struct UnitResult {
    std::size_t unit_id = 0;
    int attempt = 0;
    std::vector<store::EventRecord> events;
    std::vector<pipeline::FeatureRow> features;
    double wall_s = 0.0;
    std::int64_t frames_analyzed = 0;
};

/// Runs the detector chain on one unit.
UnitResult execute_unit(const audio::RecordingManifest& manifest, const TimeSpan& job_span,
                        const pipeline::AnalysisConfig& config, const WorkUnit& unit);
UnitResult execute_unit(const Job& job, const WorkUnit& unit);

struct UnitAccounting {
    std::size_t unit_id = 0;
    int channel = 0;
    double processed_s = 0.0; ///< core duration
    double wall_s = 0.0;
    int attempts = 0;
};

struct MergedResult {
    std::vector<store::EventRecord> events;     ///< sorted, ids 1..n
    std::vector<pipeline::FeatureRow> features; ///< every owned train, same order rule
    std::vector<UnitAccounting> units;
    std::size_t discarded_results = 0;          ///< superseded or duplicate submissions
};

/// Applies the ownership rule, sorts and numbers the events. `results[i]`
/// belongs to `units[i]`; a missing result throws Error(job_failed).
MergedResult merge_results(const std::vector<WorkUnit>& units, const std::vector<std::optional<UnitResult>>& results);

enum class WorkerStatus { idle, busy, suspect, dead };
std::string to_string(WorkerStatus s);

struct WorkerState {
    std::string worker_id;
    int capacity = 1;
    std::vector<std::size_t> assigned;
    Clock::time_point last_heartbeat{};
    WorkerStatus status = WorkerStatus::idle;
    std::size_t completed = 0;
};

struct SchedulerOptions {
    std::chrono::milliseconds timeout{30000};
    int max_attempts = 3;
};

enum class JobState { running, completed, failed };
std::string to_string(JobState s);

struct JobStatus {
    std::string job_id;
    JobState state = JobState::running;
    std::size_t units_total = 0;
    std::size_t units_done = 0;
    std::size_t discarded_results = 0;
    std::string error;
    std::vector<WorkerState> workers;
};

enum class SubmitOutcome { accepted, superseded, unknown_unit };

/// Owns all mutable scheduling state. Every public call is one event in a
/// single total order (serialized by one mutex); `now` is injectable so that
/// timeouts can be driven deterministically.
class HeadNode {
public:
    explicit HeadNode(Job job, SchedulerOptions options = {});

    const Job& job() const { return job_; }
    const std::vector<WorkUnit>& units() const { return units_; }

    /// Returns the assigned worker id (`name`, suffixed when taken).
    std::string register_worker(const std::string& name, int capacity, Clock::time_point now = Clock::now());
    void heartbeat(const std::string& worker, Clock::time_point now = Clock::now());
    /// Next unit for the worker, or nothing when it is at capacity or suspect,
    /// the queue is empty or the job has ended. Does not count as a heartbeat.
    std::optional<WorkUnit> request_assignment(const std::string& worker);
    /// Results of a superseded attempt or an already completed unit are discarded.
    SubmitOutcome submit_result(const std::string& worker, UnitResult result, Clock::time_point now = Clock::now());
    void report_error(const std::string& worker, std::size_t unit_id, int attempt, const std::string& message,
                      Clock::time_point now = Clock::now());
    /// Marks silent workers suspect and re-queues their units.
    void check_timeouts(Clock::time_point now = Clock::now());
    /// A lost connection: the worker is dead and its units go back to the queue.
    void remove_worker(const std::string& worker, Clock::time_point now = Clock::now());
    /// Aborts a running job.
    void fail(const std::string& message);

    JobStatus status() const;
    bool finished() const;
    /// Current attempt number of a unit (1 until it is re-queued, 0 if unknown).
    int unit_attempt(std::size_t unit_id) const;
    bool wait_for(std::chrono::milliseconds timeout) const;
    void wait() const;
    /// Throws Error(job_failed) with the diagnostics of a failed job.
    MergedResult result() const;

private:
    struct UnitSlot {
        int attempt = 0;
        std::optional<std::string> worker;
        bool done = false;
        double wall_s = 0.0;
        std::optional<UnitResult> result;
        std::string last_error;
    };

    WorkerState& worker_locked(const std::string& id);
    void requeue_locked(std::size_t unit_id, const std::string& why);
    void fail_locked(const std::string& message);
    void check_liveness_locked();
    void finish_locked();

    Job job_;
    SchedulerOptions options_;
    std::vector<WorkUnit> units_;
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::vector<UnitSlot> slots_;
    std::deque<std::size_t> queue_;
    std::map<std::string, WorkerState> workers_;
    std::size_t done_ = 0;
    std::size_t discarded_ = 0;
    JobState state_ = JobState::running;
    std::string error_;
    std::optional<MergedResult> merged_;
};

/// Scripted misbehaviour for the in-process pool.
struct FaultPlan {
    int stall_worker = -1;         ///< index of a worker that hangs holding its first unit
    bool late_duplicate = false;   ///< the hung worker delivers its stale result after reassignment
    double max_delay_s = 0.0;      ///< uniform random delay before each submit
    std::uint64_t delay_seed = 1;
};

struct LocalRunOptions {
    SchedulerOptions scheduler;
    std::chrono::milliseconds heartbeat_interval{1000};
    std::chrono::milliseconds monitor_interval{250};
    FaultPlan faults;
};

/// Runs the job on an in-process pool of n_workers threads and merges.
MergedResult run_local(const Job& job, int n_workers, const LocalRunOptions& options = {});

/// Drives an existing head node with n local workers until it finishes.
void run_local_workers(HeadNode& head, int n_workers, const LocalRunOptions& options = {});

/// Reference: every channel analysed in one pass, then merged the same way.
MergedResult run_single_pass(const Job& job);

} // namespace trainscan::sched
