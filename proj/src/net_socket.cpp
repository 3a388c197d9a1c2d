// SPDX-License-Identifier: Apache-2.0
#include "trainscan/net/socket.hpp"

#include "trainscan/error.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace trainscan::net {

namespace {

std::string errno_text() { return std::strerror(errno); }

} // namespace

Endpoint Endpoint::parse(const std::string& text) {
    Endpoint ep;
    const auto colon = text.rfind(':');
    std::string port = text;
    if (colon != std::string::npos) {
        if (colon > 0) {
            ep.host = text.substr(0, colon);
        }
        port = text.substr(colon + 1);
    }
    try {
        std::size_t used = 0;
        ep.port = std::stoi(port, &used);
        if (used != port.size() || ep.port < 0 || ep.port > 65535) {
            throw std::invalid_argument(port);
        }
    } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_argument, "invalid endpoint '" + text + "' (expected host:port)");
    }
    return ep;
}

LineConnection::LineConnection(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    if (::getpeername(fd_, reinterpret_cast<sockaddr*>(&addr), &len) == 0 && addr.ss_family == AF_INET) {
        char buf[INET_ADDRSTRLEN] = {};
        const auto* in = reinterpret_cast<sockaddr_in*>(&addr);
        ::inet_ntop(AF_INET, &in->sin_addr, buf, sizeof buf);
        peer_ = std::string(buf) + ":" + std::to_string(ntohs(in->sin_port));
    }
}

LineConnection::~LineConnection() {
    if (fd_ >= 0) {
        ::close(fd_);
    }
}

std::unique_ptr<LineConnection> LineConnection::connect(const Endpoint& ep, std::chrono::milliseconds timeout) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(ep.port);
    if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
        throw Error(ErrorCode::io, "cannot resolve " + ep.to_string());
    }
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::string last_error = "timed out";
    while (true) {
        const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
        if (fd < 0) {
            ::freeaddrinfo(res);
            throw Error(ErrorCode::io, "socket: " + errno_text());
        }
        if (::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
            ::freeaddrinfo(res);
            return std::make_unique<LineConnection>(fd);
        }
        last_error = errno_text();
        ::close(fd);
        if (std::chrono::steady_clock::now() >= deadline) {
            break;
        }
        ::usleep(50'000);
    }
    ::freeaddrinfo(res);
    throw Error(ErrorCode::io, "cannot connect to " + ep.to_string() + ": " + last_error);
}

bool LineConnection::send_line(const std::string& line) {
    std::lock_guard lock(send_mutex_);
    if (closed_) {
        return false;
    }
    std::string data = line;
    data += '\n';
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

LineConnection::ReadStatus LineConnection::read_line(std::string& out, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            out = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!out.empty() && out.back() == '\r') {
                out.pop_back();
            }
            return ReadStatus::line;
        }
        if (closed_) {
            return ReadStatus::closed;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() < 0) {
            return ReadStatus::timeout;
        }
        pollfd p{fd_, POLLIN, 0};
        const int r = ::poll(&p, 1, static_cast<int>(left.count()));
        if (r < 0 && errno != EINTR) {
            closed_ = true;
            continue;
        }
        if (r <= 0) {
            if (r == 0) {
                return ReadStatus::timeout;
            }
            continue;
        }
        char buf[65536];
        const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
        if (n <= 0) {
            if (n < 0 && errno == EINTR) {
                continue;
            }
            closed_ = true;
            continue;
        }
        buffer_.append(buf, static_cast<std::size_t>(n));
        if (buffer_.size() > kMaxLine && buffer_.find('\n') == std::string::npos) {
            buffer_.clear();
            closed_ = true;
        }
    }
}

void LineConnection::shutdown() {
    std::lock_guard lock(send_mutex_);
    ::shutdown(fd_, SHUT_RDWR);
}

TcpListener::TcpListener(const Endpoint& ep) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) {
        throw Error(ErrorCode::io, "socket: " + errno_text());
    }
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(ep.port));
    const std::string host = ep.host.empty() || ep.host == "*" ? "0.0.0.0" : ep.host == "localhost" ? "127.0.0.1" : ep.host;
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        throw Error(ErrorCode::invalid_argument, "bind address must be an IPv4 literal: " + ep.host);
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 64) != 0) {
        const std::string why = errno_text();
        ::close(fd_);
        throw Error(ErrorCode::io, "cannot listen on " + ep.to_string() + ": " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() { close(); }

std::unique_ptr<LineConnection> TcpListener::accept(std::chrono::milliseconds timeout) {
    if (fd_ < 0) {
        return nullptr;
    }
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0 || fd_ < 0) {
        return nullptr;
    }
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) {
        return nullptr;
    }
    return std::make_unique<LineConnection>(fd);
}

void TcpListener::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

} // namespace trainscan::net
