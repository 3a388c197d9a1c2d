// SPDX-License-Identifier: Apache-2.0
#pragma once

// Blocking TCP with newline-delimited framing.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace trainscan::net {

struct Endpoint {
    std::string host = "127.0.0.1";
    int port = 0;

    /// "host:port", ":port" or "port".
    static Endpoint parse(const std::string& text);
    std::string to_string() const { return host + ":" + std::to_string(port); }
};

/// One connected socket. Lines are sent whole under a mutex so several
/// threads may send; reading is meant for a single thread.
class LineConnection {
public:
    explicit LineConnection(int fd);
    ~LineConnection();
    LineConnection(const LineConnection&) = delete;
    LineConnection& operator=(const LineConnection&) = delete;

    static std::unique_ptr<LineConnection> connect(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::seconds(5));

    /// Appends '\n'. Returns false once the peer is gone.
    bool send_line(const std::string& line);

    enum class ReadStatus { line, timeout, closed };
    /// Waits up to `timeout` for a complete line.
    ReadStatus read_line(std::string& out, std::chrono::milliseconds timeout);

    /// Wakes blocked readers and refuses further I/O.
    void shutdown();
    bool closed() const { return closed_; }
    std::string peer() const { return peer_; }

    /// Longest accepted line; longer input closes the connection.
    static constexpr std::size_t kMaxLine = 64u << 20;

private:
    int fd_;
    std::mutex send_mutex_;
    std::string buffer_;
    std::atomic<bool> closed_{false};
    std::string peer_;
};

class TcpListener {
public:
    /// Binds and listens; port 0 picks a free port.
    explicit TcpListener(const Endpoint& ep);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    int port() const { return port_; }
    /// Waits up to `timeout`; nullptr on timeout or after close().
    std::unique_ptr<LineConnection> accept(std::chrono::milliseconds timeout);
    void close();

private:
    int fd_ = -1;
    int port_ = 0;
};

} // namespace trainscan::net
