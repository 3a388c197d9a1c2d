// SPDX-License-Identifier: Apache-2.0
#pragma once

// Worker control channel: persistent TCP connections carrying one JSON
// object per line. Audio never travels here; assignments name the manifest
// path and workers read the files themselves.
//
//   worker -> head   register {worker_id, capacity}
//                    heartbeat
//                    result {job_id, unit_id, attempt, events, features, ...}
//                    error {job_id, unit_id, attempt, message}
//   head -> worker   ack {of, ...}
//                    assign {job_id, unit, job_span, manifest, config}
//                    error {message, expected_version?}
//
// Every message carries protocol_version; anything else is refused before
// it is interpreted.

#include "trainscan/codec.hpp"
#include "trainscan/net/socket.hpp"
#include "trainscan/scheduler.hpp"

#include <atomic>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace trainscan::net {

inline constexpr int kProtocolVersion = 1;

/// The head node currently taking work, or nullptr.
using HeadProvider = std::function<std::shared_ptr<sched::HeadNode>()>;

class ControlServer {
public:
    ControlServer(const Endpoint& bind, HeadProvider provider);
    ~ControlServer();
    ControlServer(const ControlServer&) = delete;
    ControlServer& operator=(const ControlServer&) = delete;

    int port() const { return listener_.port(); }
    void stop();

    struct Stats {
        std::size_t connections = 0;
        std::size_t messages = 0;
        std::size_t rejected = 0;
        std::size_t assigns = 0;
    };
    Stats stats() const;

private:
    void accept_loop();
    void serve(LineConnection& conn);

    TcpListener listener_;
    HeadProvider provider_;
    std::atomic<bool> running_{true};
    std::thread acceptor_;
    mutable std::mutex mutex_;
    std::list<std::pair<std::shared_ptr<LineConnection>, std::thread>> connections_;
    Stats stats_;
};

struct WorkerOptions {
    std::string name = "worker";
    int capacity = 1;
    std::chrono::milliseconds heartbeat_interval{1000};
    /// Test hook: accept assignments but never answer or heartbeat again.
    bool stall = false;
};

/// A remote executor: registers, runs assigned units on `capacity` threads
/// and reports results until the head closes the connection or stop().
class WorkerClient {
public:
    WorkerClient(Endpoint head, WorkerOptions options);
    ~WorkerClient();

    /// Blocks. Throws Error(protocol) when registration is refused.
    void run();
    void stop();

    std::size_t units_completed() const { return completed_; }

private:
    Endpoint head_;
    WorkerOptions options_;
    std::shared_ptr<LineConnection> conn_;
    std::atomic<bool> running_{true};
    std::atomic<std::size_t> completed_{0};
    std::mutex conn_mutex_;
};

/// Builds a protocol message of the given type.
nlohmann::json message(const std::string& type);

} // namespace trainscan::net
