// SPDX-License-Identifier: Apache-2.0
#include "trainscan/scheduler.hpp"

#include "trainscan/error.hpp"

#include <algorithm>
#include <atomic>
#include <random>
#include <set>
#include <thread>

namespace trainscan::sched {

namespace {

std::string describe(const WorkUnit& u) {
    return "unit " + std::to_string(u.unit_id) + " (channel " + std::to_string(u.channel) + ", core " +
           format_iso8601(u.core.t0) + " .. " + format_iso8601(u.core.t1) + ")";
}

bool feature_order(const pipeline::FeatureRow& a, const pipeline::FeatureRow& b) {
    return std::tie(a.channel, a.begin_utc, a.f_lo_hz, a.p_signal, a.end_utc) <
           std::tie(b.channel, b.begin_utc, b.f_lo_hz, b.p_signal, b.end_utc);
}

bool alive(const WorkerState& w) { return w.status == WorkerStatus::idle || w.status == WorkerStatus::busy; }

} // namespace

void Job::validate() const {
    if (channels.empty()) {
        throw Error(ErrorCode::invalid_argument, "job " + job_id + ": empty channel set");
    }
    if (!manifest) {
        throw Error(ErrorCode::invalid_argument, "job " + job_id + ": no manifest");
    }
    if (!(chunking.unit_core_s > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "job " + job_id + ": unit_core_s must be positive");
    }
    if (chunking.overlap_s < config.detector.max_train_duration_s) {
        throw Error(ErrorCode::invalid_argument, "job " + job_id + ": overlap_s (" +
                                                     std::to_string(chunking.overlap_s) +
                                                     ") is below max_train_duration_s (" +
                                                     std::to_string(config.detector.max_train_duration_s) + ")");
    }
    config.validate();
    for (int ch : channels) {
        if (!manifest->has_channel(ch)) {
            throw Error(ErrorCode::not_found, "job " + job_id + ": channel " + std::to_string(ch) +
                                                  " is not in the manifest");
        }
        if (!empty() && !manifest->channel_extent(ch).intersects(span)) {
            throw Error(ErrorCode::out_of_range, "job " + job_id + ": span lies outside the recording of channel " +
                                                     std::to_string(ch));
        }
    }
}

Job make_job(const std::filesystem::path& manifest_path, std::vector<int> channels, pipeline::AnalysisConfig config,
             Chunking chunking, std::optional<TimeSpan> span) {
    Job job;
    job.manifest_path = std::filesystem::absolute(manifest_path);
    job.manifest = std::make_shared<const audio::RecordingManifest>(audio::RecordingManifest::load(manifest_path));
    job.channels = channels.empty() ? job.manifest->channels() : std::move(channels);
    job.config = std::move(config);
    job.chunking = chunking;
    if (span) {
        job.span = *span;
    } else if (!job.channels.empty() && !job.manifest->entries().empty()) {
        job.span = job.manifest->channel_extent(job.channels.front());
        for (int ch : job.channels) {
            if (job.manifest->has_channel(ch)) {
                const TimeSpan e = job.manifest->channel_extent(ch);
                job.span.t0 = std::min(job.span.t0, e.t0);
                job.span.t1 = std::max(job.span.t1, e.t1);
            }
        }
    }
    job.validate();
    return job;
}

std::vector<WorkUnit> plan_units(const Job& job) {
    std::vector<WorkUnit> units;
    if (job.empty()) {
        return units;
    }
    job.validate();
    std::set<int> channels(job.channels.begin(), job.channels.end());
    const Micros core = seconds_to_micros(job.chunking.unit_core_s);
    const Micros overlap = seconds_to_micros(job.chunking.overlap_s);
    for (int ch : channels) {
        for (UtcTime c0 = job.span.t0; c0 < job.span.t1; c0 += core) {
            WorkUnit u;
            u.unit_id = units.size();
            u.channel = ch;
            u.core = {c0, std::min(c0 + core, job.span.t1)};
            u.padded = {std::max(job.span.t0, c0 - overlap), std::min(job.span.t1, u.core.t1 + overlap)};
            units.push_back(u);
        }
    }
    return units;
}

UnitResult execute_unit(const audio::RecordingManifest& manifest, const TimeSpan& job_span,
                        const pipeline::AnalysisConfig& config, const WorkUnit& unit) {
    const auto start = Clock::now();
    auto out = pipeline::analyze_unit(manifest, unit.channel, job_span, unit.core, unit.padded, config);
    UnitResult r;
    r.unit_id = unit.unit_id;
    r.attempt = unit.attempt;
    r.events = std::move(out.events);
    r.features = std::move(out.features);
    r.frames_analyzed = out.frames_analyzed;
    r.wall_s = std::chrono::duration<double>(Clock::now() - start).count();
    return r;
}

UnitResult execute_unit(const Job& job, const WorkUnit& unit) {
    return execute_unit(*job.manifest, job.span, job.config, unit);
}

MergedResult merge_results(const std::vector<WorkUnit>& units, const std::vector<std::optional<UnitResult>>& results) {
    if (results.size() != units.size()) {
        throw Error(ErrorCode::job_failed, "merge: expected " + std::to_string(units.size()) + " unit results, got " +
                                               std::to_string(results.size()));
    }
    MergedResult m;
    for (std::size_t i = 0; i < units.size(); ++i) {
        const WorkUnit& u = units[i];
        if (!results[i]) {
            throw Error(ErrorCode::job_failed, "merge: " + describe(u) + " has no result; the job is incomplete");
        }
        for (const auto& e : results[i]->events) {
            if (e.channel == u.channel && u.core.contains(e.begin_utc)) {
                m.events.push_back(e);
            }
        }
        for (const auto& f : results[i]->features) {
            if (f.channel == u.channel && u.core.contains(f.begin_utc)) {
                m.features.push_back(f);
            }
        }
        m.units.push_back({u.unit_id, u.channel, u.core.duration_s(), results[i]->wall_s, results[i]->attempt});
    }
    std::stable_sort(m.events.begin(), m.events.end(), store::event_order);
    std::stable_sort(m.features.begin(), m.features.end(), feature_order);
    for (std::size_t i = 0; i < m.events.size(); ++i) {
        m.events[i].event_id = i + 1;
    }
    return m;
}

std::string to_string(WorkerStatus s) {
    switch (s) {
    case WorkerStatus::idle: return "idle";
    case WorkerStatus::busy: return "busy";
    case WorkerStatus::suspect: return "suspect";
    case WorkerStatus::dead: return "dead";
    }
    return "unknown";
}

std::string to_string(JobState s) {
    switch (s) {
    case JobState::running: return "running";
    case JobState::completed: return "completed";
    case JobState::failed: return "failed";
    }
    return "unknown";
}

HeadNode::HeadNode(Job job, SchedulerOptions options) : job_(std::move(job)), options_(options) {
    if (options_.max_attempts < 1 || options_.timeout.count() <= 0) {
        throw Error(ErrorCode::invalid_argument, "scheduler: max_attempts and timeout must be positive");
    }
    units_ = plan_units(job_);
    slots_.resize(units_.size());
    for (std::size_t i = 0; i < units_.size(); ++i) {
        slots_[i].attempt = 1;
        queue_.push_back(i);
    }
    if (units_.empty()) {
        std::lock_guard lock(mutex_);
        finish_locked();
    }
}

WorkerState& HeadNode::worker_locked(const std::string& id) {
    auto it = workers_.find(id);
    if (it == workers_.end()) {
        throw Error(ErrorCode::not_found, "unknown worker '" + id + "'");
    }
    return it->second;
}

std::string HeadNode::register_worker(const std::string& name, int capacity, Clock::time_point now) {
    if (capacity < 1) {
        throw Error(ErrorCode::invalid_argument, "worker capacity must be at least 1");
    }
    std::lock_guard lock(mutex_);
    std::string id = name.empty() ? "worker" : name;
    for (int k = 2; workers_.count(id); ++k) {
        id = (name.empty() ? "worker" : name) + "-" + std::to_string(k);
    }
    WorkerState w;
    w.worker_id = id;
    w.capacity = capacity;
    w.last_heartbeat = now;
    workers_.emplace(id, std::move(w));
    return id;
}

void HeadNode::heartbeat(const std::string& worker, Clock::time_point now) {
    std::lock_guard lock(mutex_);
    WorkerState& w = worker_locked(worker);
    if (w.status == WorkerStatus::dead) {
        return;
    }
    w.last_heartbeat = now;
    if (w.status == WorkerStatus::suspect) {
        w.status = w.assigned.empty() ? WorkerStatus::idle : WorkerStatus::busy;
    }
}

std::optional<WorkUnit> HeadNode::request_assignment(const std::string& worker) {
    std::lock_guard lock(mutex_);
    WorkerState& w = worker_locked(worker);
    if (w.status == WorkerStatus::dead || state_ != JobState::running) {
        return std::nullopt;
    }
    // Not a sign of life: the control server asks on behalf of its connections.
    if (w.status == WorkerStatus::suspect || static_cast<int>(w.assigned.size()) >= w.capacity || queue_.empty()) {
        return std::nullopt;
    }
    const std::size_t id = queue_.front();
    queue_.pop_front();
    slots_[id].worker = worker;
    w.assigned.push_back(id);
    w.status = WorkerStatus::busy;
    WorkUnit u = units_[id];
    u.attempt = slots_[id].attempt;
    return u;
}

SubmitOutcome HeadNode::submit_result(const std::string& worker, UnitResult result, Clock::time_point now) {
    std::lock_guard lock(mutex_);
    if (result.unit_id >= slots_.size()) {
        ++discarded_;
        return SubmitOutcome::unknown_unit;
    }
    auto wit = workers_.find(worker);
    if (wit != workers_.end() && wit->second.status != WorkerStatus::dead) {
        wit->second.last_heartbeat = now;
    }
    UnitSlot& slot = slots_[result.unit_id];
    const bool current = state_ == JobState::running && !slot.done && result.attempt == slot.attempt &&
                         slot.worker == worker;
    if (!current) {
        ++discarded_;
        return SubmitOutcome::superseded;
    }
    WorkerState& w = wit->second;
    std::erase(w.assigned, result.unit_id);
    ++w.completed;
    if (w.status == WorkerStatus::busy && w.assigned.empty()) {
        w.status = WorkerStatus::idle;
    }
    slot.done = true;
    slot.wall_s = result.wall_s;
    slot.result = std::move(result);
    if (++done_ == slots_.size()) {
        finish_locked();
    }
    return SubmitOutcome::accepted;
}

void HeadNode::report_error(const std::string& worker, std::size_t unit_id, int attempt, const std::string& message,
                            Clock::time_point now) {
    std::lock_guard lock(mutex_);
    if (unit_id >= slots_.size() || state_ != JobState::running) {
        return;
    }
    UnitSlot& slot = slots_[unit_id];
    if (slot.done || slot.attempt != attempt || slot.worker != worker) {
        return;
    }
    WorkerState& w = worker_locked(worker);
    w.last_heartbeat = now;
    std::erase(w.assigned, unit_id);
    if (w.status == WorkerStatus::busy && w.assigned.empty()) {
        w.status = WorkerStatus::idle;
    }
    requeue_locked(unit_id, "worker " + worker + ": " + message);
}

void HeadNode::requeue_locked(std::size_t unit_id, const std::string& why) {
    UnitSlot& slot = slots_[unit_id];
    slot.worker.reset();
    slot.last_error = why;
    if (slot.attempt >= options_.max_attempts) {
        fail_locked(describe(units_[unit_id]) + " failed after " + std::to_string(slot.attempt) +
                    " attempts; last error: " + why);
        return;
    }
    ++slot.attempt;
    queue_.push_front(unit_id);
}

void HeadNode::check_timeouts(Clock::time_point now) {
    std::lock_guard lock(mutex_);
    if (state_ != JobState::running) {
        return;
    }
    for (auto& [id, w] : workers_) {
        if (!alive(w) || now - w.last_heartbeat <= options_.timeout) {
            continue;
        }
        w.status = WorkerStatus::suspect;
        const auto held = std::exchange(w.assigned, {});
        for (std::size_t unit : held) {
            requeue_locked(unit, "worker " + id + " timed out");
            if (state_ != JobState::running) {
                return;
            }
        }
    }
    check_liveness_locked();
}

void HeadNode::remove_worker(const std::string& worker, Clock::time_point) {
    std::lock_guard lock(mutex_);
    auto it = workers_.find(worker);
    if (it == workers_.end() || it->second.status == WorkerStatus::dead) {
        return;
    }
    it->second.status = WorkerStatus::dead;
    const auto held = std::exchange(it->second.assigned, {});
    if (state_ != JobState::running) {
        return;
    }
    for (std::size_t unit : held) {
        requeue_locked(unit, "worker " + worker + " disconnected");
        if (state_ != JobState::running) {
            return;
        }
    }
    check_liveness_locked();
}

void HeadNode::check_liveness_locked() {
    if (state_ != JobState::running || workers_.empty()) {
        return;
    }
    if (std::any_of(workers_.begin(), workers_.end(), [](const auto& kv) { return alive(kv.second); })) {
        return;
    }
    std::string msg = "no live workers remain (";
    bool first = true;
    for (const auto& [id, w] : workers_) {
        msg += (first ? "" : ", ") + id + ": " + to_string(w.status);
        first = false;
    }
    msg += "); " + std::to_string(slots_.size() - done_) + " of " + std::to_string(slots_.size()) +
           " units unfinished";
    fail_locked(msg);
}

void HeadNode::fail(const std::string& message) {
    std::lock_guard lock(mutex_);
    if (state_ == JobState::running) {
        fail_locked(message);
    }
}

void HeadNode::fail_locked(const std::string& message) {
    state_ = JobState::failed;
    error_ = "job " + job_.job_id + " failed: " + message;
    cv_.notify_all();
}

void HeadNode::finish_locked() {
    std::vector<std::optional<UnitResult>> results;
    results.reserve(slots_.size());
    for (auto& s : slots_) {
        results.push_back(std::move(s.result));
        s.result.reset();
    }
    try {
        merged_ = merge_results(units_, results);
        state_ = JobState::completed;
    } catch (const Error& e) {
        fail_locked(e.what());
    }
    cv_.notify_all();
}

JobStatus HeadNode::status() const {
    std::lock_guard lock(mutex_);
    JobStatus s;
    s.job_id = job_.job_id;
    s.state = state_;
    s.units_total = slots_.size();
    s.units_done = done_;
    s.discarded_results = discarded_;
    s.error = error_;
    for (const auto& [id, w] : workers_) {
        s.workers.push_back(w);
    }
    return s;
}

bool HeadNode::finished() const {
    std::lock_guard lock(mutex_);
    return state_ != JobState::running;
}

int HeadNode::unit_attempt(std::size_t unit_id) const {
    std::lock_guard lock(mutex_);
    return unit_id < slots_.size() ? slots_[unit_id].attempt : 0;
}

bool HeadNode::wait_for(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout, [&] { return state_ != JobState::running; });
}

void HeadNode::wait() const {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return state_ != JobState::running; });
}

MergedResult HeadNode::result() const {
    std::lock_guard lock(mutex_);
    if (state_ == JobState::failed) {
        throw Error(ErrorCode::job_failed, error_);
    }
    if (state_ != JobState::completed || !merged_) {
        throw Error(ErrorCode::job_failed, "job " + job_.job_id + " has not finished");
    }
    MergedResult m = *merged_;
    m.discarded_results = discarded_;
    return m;
}

void run_local_workers(HeadNode& head, int n_workers, const LocalRunOptions& options) {
    if (n_workers < 1) {
        throw Error(ErrorCode::invalid_argument, "n_workers must be at least 1");
    }
    const auto n = static_cast<std::size_t>(n_workers);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back(head.register_worker("local-" + std::to_string(i), 1));
    }
    std::vector<std::atomic<bool>> hung(n);
    const auto poll = std::chrono::milliseconds(2);

    auto worker = [&](std::size_t i) {
        std::mt19937_64 rng(options.faults.delay_seed + i);
        std::uniform_real_distribution<double> delay(0.0, options.faults.max_delay_s);
        const bool stalls = static_cast<int>(i) == options.faults.stall_worker;
        while (!head.finished()) {
            auto unit = head.request_assignment(ids[i]);
            if (!unit) {
                head.wait_for(poll);
                continue;
            }
            if (stalls) {
                hung[i] = true;
                std::optional<UnitResult> stale;
                if (options.faults.late_duplicate) {
                    stale = execute_unit(head.job(), *unit);
                }
                // Hang until the unit has been handed to someone else.
                while (!head.finished() && head.unit_attempt(unit->unit_id) <= unit->attempt) {
                    head.wait_for(std::chrono::milliseconds(20));
                }
                if (stale) {
                    head.submit_result(ids[i], std::move(*stale));
                }
                head.wait();
                return;
            }
            try {
                UnitResult r = execute_unit(head.job(), *unit);
                if (options.faults.max_delay_s > 0.0) {
                    std::this_thread::sleep_for(std::chrono::duration<double>(delay(rng)));
                }
                head.submit_result(ids[i], std::move(r));
            } catch (const std::exception& e) {
                head.report_error(ids[i], unit->unit_id, unit->attempt, e.what());
            }
        }
    };
    auto heartbeats = [&] {
        while (!head.wait_for(options.heartbeat_interval)) {
            for (std::size_t i = 0; i < n; ++i) {
                if (!hung[i]) {
                    head.heartbeat(ids[i]);
                }
            }
        }
    };
    auto monitor = [&] {
        while (!head.wait_for(options.monitor_interval)) {
            head.check_timeouts();
        }
    };

    std::vector<std::thread> threads;
    threads.emplace_back(heartbeats);
    threads.emplace_back(monitor);
    for (std::size_t i = 0; i < n; ++i) {
        threads.emplace_back(worker, i);
    }
    for (auto& t : threads) {
        t.join();
    }
}

MergedResult run_local(const Job& job, int n_workers, const LocalRunOptions& options) {
    if (n_workers < 1) {
        throw Error(ErrorCode::invalid_argument, "n_workers must be at least 1");
    }
    HeadNode head(job, options.scheduler);
    if (!head.finished()) {
        run_local_workers(head, n_workers, options);
    }
    return head.result();
}

MergedResult run_single_pass(const Job& job) {
    if (job.empty()) {
        return {};
    }
    job.validate();
    std::vector<WorkUnit> units;
    std::vector<std::optional<UnitResult>> results;
    std::set<int> channels(job.channels.begin(), job.channels.end());
    for (int ch : channels) {
        WorkUnit u;
        u.unit_id = units.size();
        u.channel = ch;
        u.core = job.span;
        u.padded = job.span;
        u.attempt = 1;
        results.emplace_back(execute_unit(job, u));
        units.push_back(u);
    }
    return merge_results(units, results);
}

} // namespace trainscan::sched
