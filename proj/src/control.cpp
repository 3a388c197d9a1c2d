// SPDX-License-Identifier: Apache-2.0
#include "trainscan/net/control.hpp"

#include "trainscan/codec.hpp"
#include "trainscan/error.hpp"

#include <condition_variable>
#include <deque>
#include <map>

namespace trainscan::net {

using codec::json;
using namespace std::chrono_literals;

json message(const std::string& type) { return json{{"type", type}, {"protocol_version", kProtocolVersion}}; }

namespace {

json error_message(const std::string& text, bool version_problem = false) {
    json m = message("error");
    m["message"] = text;
    if (version_problem) {
        m["expected_version"] = kProtocolVersion;
    }
    return m;
}

std::string outcome_name(sched::SubmitOutcome o) {
    switch (o) {
    case sched::SubmitOutcome::accepted: return "accepted";
    case sched::SubmitOutcome::superseded: return "superseded";
    case sched::SubmitOutcome::unknown_unit: return "unknown_unit";
    }
    return "unknown";
}

} // namespace

ControlServer::ControlServer(const Endpoint& bind, HeadProvider provider)
    : listener_(bind), provider_(std::move(provider)) {
    acceptor_ = std::thread([this] { accept_loop(); });
}

ControlServer::~ControlServer() { stop(); }

void ControlServer::stop() {
    if (!running_.exchange(false)) {
        return;
    }
    if (acceptor_.joinable()) {
        acceptor_.join();
    }
    listener_.close();
    std::list<std::pair<std::shared_ptr<LineConnection>, std::thread>> conns;
    {
        std::lock_guard lock(mutex_);
        conns.swap(connections_);
    }
    for (auto& [c, t] : conns) {
        c->shutdown();
    }
    for (auto& [c, t] : conns) {
        if (t.joinable()) {
            t.join();
        }
    }
}

ControlServer::Stats ControlServer::stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
}

void ControlServer::accept_loop() {
    while (running_) {
        auto conn = listener_.accept(100ms);
        if (!conn) {
            continue;
        }
        std::shared_ptr<LineConnection> shared(std::move(conn));
        std::lock_guard lock(mutex_);
        ++stats_.connections;
        auto& slot = connections_.emplace_back(shared, std::thread());
        slot.second = std::thread([this, shared] { serve(*shared); });
    }
}

void ControlServer::serve(LineConnection& conn) {
    std::string name;
    int capacity = 0;
    bool registered = false;
    std::shared_ptr<sched::HeadNode> head;
    std::string wid;

    auto send = [&](const json& m) { conn.send_line(m.dump()); };
    auto attach = [&](std::shared_ptr<sched::HeadNode> h) {
        if (head && !wid.empty()) {
            head->remove_worker(wid);
        }
        head = std::move(h);
        wid.clear();
        if (head && !head->finished()) {
            wid = head->register_worker(name, capacity);
        }
    };

    std::string line;
    while (running_) {
        if (registered) {
            auto current = provider_();
            if (current != head) {
                attach(current);
            }
            if (head && !wid.empty()) {
                while (auto unit = head->request_assignment(wid)) {
                    const auto& job = head->job();
                    json m = message("assign");
                    m["job_id"] = job.job_id;
                    m["unit"] = codec::to_json(*unit);
                    m["job_span"] = codec::to_json(job.span);
                    m["manifest"] = job.manifest_path.string();
                    m["config"] = json::parse(job.config.to_json());
                    send(m);
                    std::lock_guard lock(mutex_);
                    ++stats_.assigns;
                }
            }
        }
        const auto status = conn.read_line(line, 100ms);
        if (status == LineConnection::ReadStatus::closed) {
            break;
        }
        if (status == LineConnection::ReadStatus::timeout) {
            continue;
        }
        {
            std::lock_guard lock(mutex_);
            ++stats_.messages;
        }
        auto reject = [&](const std::string& why, bool version = false) {
            send(error_message(why, version));
            std::lock_guard lock(mutex_);
            ++stats_.rejected;
        };
        json m;
        try {
            m = json::parse(line);
        } catch (const json::exception&) {
            reject("malformed message: not JSON");
            continue;
        }
        if (!m.is_object()) {
            reject("malformed message: expected a JSON object");
            continue;
        }
        if (!m.contains("protocol_version") || !m["protocol_version"].is_number_integer()) {
            reject("missing protocol_version", true);
            continue;
        }
        if (m["protocol_version"].get<int>() != kProtocolVersion) {
            reject("unsupported protocol_version " + m["protocol_version"].dump(), true);
            continue;
        }
        const std::string type = m.value("type", std::string());
        try {
            if (type == "register") {
                if (registered) {
                    reject("already registered");
                    continue;
                }
                name = m.value("worker_id", std::string("worker"));
                capacity = m.value("capacity", 1);
                if (capacity < 1) {
                    reject("capacity must be at least 1");
                    continue;
                }
                registered = true;
                attach(provider_());
                json ack = message("ack");
                ack["of"] = "register";
                ack["worker_id"] = name;
                ack["capacity"] = capacity;
                send(ack);
            } else if (!registered) {
                reject("register before sending '" + type + "'");
            } else if (type == "heartbeat") {
                if (head && !wid.empty()) {
                    head->heartbeat(wid);
                }
            } else if (type == "result") {
                sched::UnitResult r;
                r.unit_id = m.at("unit_id").get<std::size_t>();
                r.attempt = m.at("attempt").get<int>();
                r.wall_s = m.value("wall_s", 0.0);
                r.frames_analyzed = m.value("frames_analyzed", std::int64_t{0});
                for (const auto& e : m.at("events")) {
                    r.events.push_back(codec::event_from_json(e));
                }
                for (const auto& f : m.value("features", json::array())) {
                    r.features.push_back(codec::feature_row_from_json(f));
                }
                json ack = message("ack");
                ack["of"] = "result";
                ack["unit_id"] = r.unit_id;
                ack["attempt"] = r.attempt;
                const bool same_job = head && !wid.empty() && m.value("job_id", std::string()) == head->job().job_id;
                ack["status"] = same_job ? outcome_name(head->submit_result(wid, std::move(r))) : "superseded";
                send(ack);
            } else if (type == "error") {
                const bool same_job = head && !wid.empty() && m.value("job_id", std::string()) == head->job().job_id;
                if (same_job) {
                    head->report_error(wid, m.at("unit_id").get<std::size_t>(), m.at("attempt").get<int>(),
                                       m.value("message", std::string("unspecified worker error")));
                }
                json ack = message("ack");
                ack["of"] = "error";
                send(ack);
            } else {
                reject("unknown message type '" + type + "'");
            }
        } catch (const std::exception& e) {
            reject(std::string("malformed ") + type + " message: " + e.what());
        }
    }
    if (head && !wid.empty()) {
        head->remove_worker(wid);
    }
}

WorkerClient::WorkerClient(Endpoint head, WorkerOptions options) : head_(std::move(head)), options_(std::move(options)) {}

WorkerClient::~WorkerClient() { stop(); }

void WorkerClient::stop() {
    running_ = false;
    std::lock_guard lock(conn_mutex_);
    if (conn_) {
        conn_->shutdown();
    }
}

void WorkerClient::run() {
    {
        std::lock_guard lock(conn_mutex_);
        conn_ = LineConnection::connect(head_);
    }
    LineConnection& conn = *conn_;
    json reg = message("register");
    reg["worker_id"] = options_.name;
    reg["capacity"] = options_.capacity;
    conn.send_line(reg.dump());
    std::string line;
    while (true) {
        const auto st = conn.read_line(line, 10s);
        if (st != LineConnection::ReadStatus::line) {
            throw Error(ErrorCode::protocol, "no registration reply from " + head_.to_string());
        }
        const json m = json::parse(line, nullptr, false);
        if (m.is_object() && m.value("type", "") == "ack" && m.value("of", "") == "register") {
            break;
        }
        if (m.is_object() && m.value("type", "") == "error") {
            throw Error(ErrorCode::protocol, "registration refused: " + m.value("message", std::string()));
        }
    }

    struct Task {
        json assign;
    };
    std::mutex qm;
    std::condition_variable qcv;
    std::deque<Task> queue;
    bool done = false;
    std::mutex cache_mutex;
    std::map<std::string, std::shared_ptr<const audio::RecordingManifest>> manifests;

    auto execute = [&](const json& a) {
        const sched::WorkUnit unit = codec::unit_from_json(a.at("unit"));
        json out;
        try {
            const std::string path = a.at("manifest").get<std::string>();
            std::shared_ptr<const audio::RecordingManifest> manifest;
            {
                std::lock_guard lock(cache_mutex);
                auto& slot = manifests[path];
                if (!slot) {
                    slot = std::make_shared<const audio::RecordingManifest>(audio::RecordingManifest::load(path));
                }
                manifest = slot;
            }
            const auto config = pipeline::AnalysisConfig::from_json(a.at("config").dump());
            const auto r = sched::execute_unit(*manifest, codec::span_from_json(a.at("job_span")), config, unit);
            out = message("result");
            out["unit_id"] = r.unit_id;
            out["attempt"] = r.attempt;
            out["wall_s"] = r.wall_s;
            out["frames_analyzed"] = r.frames_analyzed;
            json events = json::array();
            for (const auto& e : r.events) {
                events.push_back(codec::to_json(e));
            }
            json features = json::array();
            for (const auto& f : r.features) {
                features.push_back(codec::to_json(f));
            }
            out["events"] = std::move(events);
            out["features"] = std::move(features);
            ++completed_;
        } catch (const std::exception& e) {
            out = message("error");
            out["unit_id"] = unit.unit_id;
            out["attempt"] = unit.attempt;
            out["message"] = e.what();
        }
        out["job_id"] = a.value("job_id", std::string());
        out["worker_id"] = options_.name;
        conn.send_line(out.dump());
    };

    std::vector<std::thread> pool;
    for (int i = 0; i < options_.capacity; ++i) {
        pool.emplace_back([&] {
            while (true) {
                Task t;
                {
                    std::unique_lock lock(qm);
                    qcv.wait(lock, [&] { return done || !queue.empty(); });
                    if (queue.empty()) {
                        return;
                    }
                    t = std::move(queue.front());
                    queue.pop_front();
                }
                execute(t.assign);
            }
        });
    }
    std::thread heartbeat([&] {
        std::unique_lock lock(qm);
        while (!done) {
            qcv.wait_for(lock, options_.heartbeat_interval);
            if (!done && !options_.stall) {
                json hb = message("heartbeat");
                hb["worker_id"] = options_.name;
                conn.send_line(hb.dump());
            }
        }
    });

    while (running_) {
        const auto st = conn.read_line(line, 200ms);
        if (st == LineConnection::ReadStatus::closed) {
            break;
        }
        if (st != LineConnection::ReadStatus::line) {
            continue;
        }
        json m = json::parse(line, nullptr, false);
        if (!m.is_object() || m.value("type", "") != "assign" || options_.stall) {
            continue;
        }
        std::lock_guard lock(qm);
        queue.push_back({std::move(m)});
        qcv.notify_all();
    }
    {
        std::lock_guard lock(qm);
        done = true;
        queue.clear();
        qcv.notify_all();
    }
    for (auto& t : pool) {
        t.join();
    }
    heartbeat.join();
}

} // namespace trainscan::net
