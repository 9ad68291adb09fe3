#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "fosr/transport.hpp"

namespace fosr {

// Length-prefixed TCP transport over 127.0.0.1 for the same single-host
// simulation the loopback transport runs, but with the messages actually
// crossing OS sockets. A router thread owns the listening socket; every
// participant holds one full-duplex connection to it.
//
// Frame from a participant to the router: [u32 length][i32 to][bytes],
// where length = 4 + byte count. Frame from the router to a participant:
// [u32 length][bytes]. Both integers are big-endian; bytes are the JSON
// wire form of one message.
class SocketTransport : public Transport {
public:
    explicit SocketTransport(const std::vector<int>& participants) {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw Error("socket transport: socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = 0;
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
            ::listen(listen_fd_, static_cast<int>(participants.size()) + 1) != 0) {
            ::close(listen_fd_);
            throw Error("socket transport: could not bind a loopback port");
        }
        socklen_t len = sizeof(addr);
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        const sockaddr_in connect_addr = addr;

        for (int id : participants) {
            const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
            if (fd < 0) throw Error("socket transport: socket() failed");
            if (::connect(fd, reinterpret_cast<const sockaddr*>(&connect_addr),
                          sizeof(connect_addr)) != 0) {
                ::close(fd);
                throw Error("socket transport: connect() failed");
            }
            const int accepted = ::accept(listen_fd_, nullptr, nullptr);
            if (accepted < 0) {
                ::close(fd);
                throw Error("socket transport: accept() failed");
            }
            endpoints_.emplace(std::piecewise_construct, std::forward_as_tuple(id),
                               std::forward_as_tuple(fd));
            router_fds_[accepted] = id;
        }
        router_ = std::thread([this] { route(); });
    }

    SocketTransport(const SocketTransport&) = delete;
    SocketTransport& operator=(const SocketTransport&) = delete;

    ~SocketTransport() override {
        for (auto& [id, ep] : endpoints_) {
            (void)id;
            ::shutdown(ep.fd, SHUT_RDWR);
        }
        if (router_.joinable()) router_.join();
        for (auto& [id, ep] : endpoints_) {
            (void)id;
            ::close(ep.fd);
        }
        for (const auto& [fd, id] : router_fds_) {
            (void)id;
            ::close(fd);
        }
        ::close(listen_fd_);
    }

    void send(int to, const Message& msg) override {
        auto from = endpoints_.find(msg.sender_id);
        if (from == endpoints_.end()) {
            throw ProtocolError("socket transport: unknown sender " +
                                std::to_string(msg.sender_id));
        }
        if (!endpoints_.count(to)) {
            throw ProtocolError("socket transport: unknown recipient " + std::to_string(to));
        }
        const std::string bytes = serialize_message(msg);
        std::string frame;
        frame.reserve(8 + bytes.size());
        append_u32(frame, static_cast<std::uint32_t>(4 + bytes.size()));
        append_u32(frame, static_cast<std::uint32_t>(to));
        frame += bytes;
        std::lock_guard lock(from->second.write_mutex);
        write_all(from->second.fd, frame);
    }

    Message receive(int participant, std::chrono::milliseconds timeout) override {
        auto it = endpoints_.find(participant);
        if (it == endpoints_.end()) {
            throw ProtocolError("socket transport: unknown participant " +
                                std::to_string(participant));
        }
        Endpoint& ep = it->second;
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        std::lock_guard lock(ep.read_mutex);
        for (;;) {
            if (ep.buffer.size() >= 4) {
                const std::uint32_t need = read_u32(ep.buffer.data());
                if (ep.buffer.size() >= 4 + need) {
                    std::string bytes = ep.buffer.substr(4, need);
                    ep.buffer.erase(0, 4 + need);
                    return deserialize_message(bytes);
                }
            }
            const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            if (remaining.count() <= 0) {
                throw TimeoutError("receive timed out for participant " +
                                   std::to_string(participant));
            }
            pollfd pfd{ep.fd, POLLIN, 0};
            const int rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
            if (rc == 0) {
                throw TimeoutError("receive timed out for participant " +
                                   std::to_string(participant));
            }
            if (rc < 0) throw Error("socket transport: poll() failed");
            char chunk[65536];
            const ssize_t n = ::read(ep.fd, chunk, sizeof(chunk));
            if (n <= 0) throw Error("socket transport: connection closed");
            ep.buffer.append(chunk, static_cast<std::size_t>(n));
        }
    }

private:
    struct Endpoint {
        int fd = -1;
        std::mutex write_mutex;
        std::mutex read_mutex;
        std::string buffer;

        explicit Endpoint(int f) : fd(f) {}
    };

    static void append_u32(std::string& out, std::uint32_t v) {
        out.push_back(static_cast<char>((v >> 24) & 0xff));
        out.push_back(static_cast<char>((v >> 16) & 0xff));
        out.push_back(static_cast<char>((v >> 8) & 0xff));
        out.push_back(static_cast<char>(v & 0xff));
    }

    static std::uint32_t read_u32(const char* p) {
        const auto b = [p](int i) {
            return static_cast<std::uint32_t>(static_cast<unsigned char>(p[i]));
        };
        return (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
    }

    static void write_all(int fd, const std::string& bytes) {
        std::size_t off = 0;
        while (off < bytes.size()) {
            const ssize_t n = ::write(fd, bytes.data() + off, bytes.size() - off);
            if (n <= 0) throw Error("socket transport: write() failed");
            off += static_cast<std::size_t>(n);
        }
    }

    // Forwards frames between participants until every connection closes.
    void route() {
        std::map<int, std::string> buffers;
        for (;;) {
            std::vector<pollfd> fds;
            for (const auto& [fd, id] : router_fds_) {
                (void)id;
                fds.push_back({fd, POLLIN, 0});
            }
            if (fds.empty()) return;
            if (::poll(fds.data(), fds.size(), 100) < 0) return;
            for (const pollfd& pfd : fds) {
                if (!(pfd.revents & (POLLIN | POLLHUP | POLLERR))) continue;
                char chunk[65536];
                const ssize_t n = ::read(pfd.fd, chunk, sizeof(chunk));
                if (n <= 0) {
                    if (router_fds_.erase(pfd.fd)) ::close(pfd.fd);
                    if (router_fds_.empty()) return;
                    continue;
                }
                std::string& buf = buffers[pfd.fd];
                buf.append(chunk, static_cast<std::size_t>(n));
                while (buf.size() >= 4) {
                    const std::uint32_t len = read_u32(buf.data());
                    if (buf.size() < 4 + len) break;
                    const int to = static_cast<int>(read_u32(buf.data() + 4));
                    std::string out;
                    append_u32(out, len - 4);
                    out += buf.substr(8, len - 4);
                    buf.erase(0, 4 + len);
                    for (const auto& [fd, id] : router_fds_) {
                        if (id == to) {
                            write_all(fd, out);
                            break;
                        }
                    }
                }
            }
        }
    }

    int listen_fd_ = -1;
    std::map<int, Endpoint> endpoints_; // participant id -> its connection
    std::map<int, int> router_fds_;     // router-side fd -> participant id
    std::thread router_;
};

} // namespace fosr
