#pragma once

#include <string>
#include <variant>

#include "fosr/classifier.hpp"
#include "fosr/error.hpp"
#include "fosr/openmax.hpp"

namespace fosr {

// The server's participant id; clients are 0..N-1.
inline constexpr int kServerId = -1;

enum class MessageType { GlobalModel, ClientUpdate, CalibrationUpload, GlobalCalibration, Ack };

inline std::string to_string(MessageType t) {
    switch (t) {
    case MessageType::GlobalModel: return "global_model";
    case MessageType::ClientUpdate: return "client_update";
    case MessageType::CalibrationUpload: return "calibration_upload";
    case MessageType::GlobalCalibration: return "global_calibration";
    case MessageType::Ack: return "ack";
    }
    throw InvalidInputError("to_string: bad MessageType");
}

inline MessageType message_type_from_string(const std::string& s) {
    if (s == "global_model") return MessageType::GlobalModel;
    if (s == "client_update") return MessageType::ClientUpdate;
    if (s == "calibration_upload") return MessageType::CalibrationUpload;
    if (s == "global_calibration") return MessageType::GlobalCalibration;
    if (s == "ack") return MessageType::Ack;
    throw ProtocolError("unknown message type: \"" + s + "\"");
}

struct GlobalModelPayload {
    ModelParameters model;
    bool operator==(const GlobalModelPayload&) const = default;
};

struct ClientUpdatePayload {
    ModelParameters model;
    int sample_count = 0;
    bool operator==(const ClientUpdatePayload&) const = default;
};

struct AckPayload {
    bool operator==(const AckPayload&) const = default;
};

// The payload variant order matches the MessageType enumerator order, so a
// message is well formed exactly when payload.index() == (size_t)type.
using MessagePayload = std::variant<GlobalModelPayload, ClientUpdatePayload,
                                    CalibrationUpload, GlobalCalibration, AckPayload>;

struct Message {
    MessageType type = MessageType::Ack;
    int round = 0;
    int sender_id = kServerId;
    MessagePayload payload = AckPayload{};

    bool operator==(const Message&) const = default;
};

inline bool payload_matches(const Message& msg) {
    return msg.payload.index() == static_cast<std::size_t>(msg.type);
}

inline void check_message(const Message& msg) {
    if (!payload_matches(msg)) {
        throw ProtocolError("message payload does not match type \"" +
                            to_string(msg.type) + "\"");
    }
    if (msg.round < 0) throw ProtocolError("message round must be >= 0");
}

inline Message make_message(MessageType type, int round, int sender_id,
                            MessagePayload payload) {
    Message msg{type, round, sender_id, std::move(payload)};
    check_message(msg);
    return msg;
}

} // namespace fosr
