#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "fosr/message.hpp"
#include "fosr/serialization.hpp"

namespace fosr {

// Reliable, in-order message channel between the server (id -1) and the
// clients (ids 0..N-1). Implementations must preserve FIFO order per
// (sender, receiver) pair and never lose or duplicate messages. send may be
// called concurrently from many workers; receive has one consumer per
// participant.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void send(int to, const Message& msg) = 0;
    // Blocks until a message for `participant` arrives; throws TimeoutError
    // if none does within `timeout`.
    virtual Message receive(int participant, std::chrono::milliseconds timeout) = 0;
};

struct WireRecord {
    int to = 0;
    std::string bytes;
};

// Deterministic in-process transport. Every message is serialized to its
// wire form and parsed back on delivery, so a loopback run exercises the
// exact same byte schema a networked run would. Optionally keeps a log of
// the bytes that crossed the wire.
class LoopbackTransport : public Transport {
public:
    explicit LoopbackTransport(bool record_wire = false) : record_wire_(record_wire) {}

    void send(int to, const Message& msg) override {
        std::string bytes = serialize_message(msg);
        Message delivered = deserialize_message(bytes);
        std::lock_guard lock(mutex_);
        if (record_wire_) log_.push_back({to, std::move(bytes)});
        mailboxes_[to].push_back(std::move(delivered));
        cv_.notify_all();
    }

    Message receive(int participant, std::chrono::milliseconds timeout) override {
        std::unique_lock lock(mutex_);
        auto& box = mailboxes_[participant];
        if (!cv_.wait_for(lock, timeout, [&box] { return !box.empty(); })) {
            throw TimeoutError("receive timed out for participant " +
                               std::to_string(participant));
        }
        Message msg = std::move(box.front());
        box.pop_front();
        return msg;
    }

    std::vector<WireRecord> wire_log() const {
        std::lock_guard lock(mutex_);
        return log_;
    }

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::map<int, std::deque<Message>> mailboxes_;
    bool record_wire_;
    std::vector<WireRecord> log_;
};

} // namespace fosr
