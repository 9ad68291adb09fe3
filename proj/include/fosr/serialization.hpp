#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fosr/evaluation.hpp"
#include "fosr/message.hpp"

namespace fosr {

// All wire and file payloads are JSON. nlohmann emits doubles with the
// shortest representation that parses back to the same bits, so values
// survive serialize/deserialize round trips exactly.
using Json = nlohmann::ordered_json;

namespace detail {

inline const Json& require_field(const Json& j, const char* key, const std::string& ctx) {
    const auto it = j.find(key);
    if (it == j.end()) {
        throw ProtocolError(ctx + ": missing field \"" + key + "\"");
    }
    return *it;
}

inline std::vector<double> to_double_vector(const Json& j, const std::string& ctx) {
    if (!j.is_array()) throw ProtocolError(ctx + ": expected an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& x : j) {
        if (!x.is_number()) throw ProtocolError(ctx + ": expected an array of numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

} // namespace detail

inline Json model_to_json(const ModelParameters& m) {
    Json j;
    auto& shapes = j["shapes"];
    shapes = Json::array();
    for (const auto& s : m.shapes) shapes.push_back({s.rows, s.cols});
    j["values"] = m.values;
    return j;
}

inline ModelParameters model_from_json(const Json& j, const std::string& ctx) {
    ModelParameters m;
    const Json& shapes = detail::require_field(j, "shapes", ctx);
    if (!shapes.is_array()) throw ProtocolError(ctx + ": \"shapes\" must be an array");
    for (const auto& s : shapes) {
        if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() ||
            !s[1].is_number_unsigned()) {
            throw ProtocolError(ctx + ": each shape must be a [rows, cols] pair");
        }
        m.shapes.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>()});
    }
    m.values = detail::to_double_vector(detail::require_field(j, "values", ctx),
                                        ctx + ".values");
    if (m.values.size() != m.expected_size()) {
        throw ProtocolError(ctx + ": value count does not match shapes");
    }
    return m;
}

inline Json calibration_upload_to_json(const CalibrationUpload& upload) {
    Json j;
    j["client_id"] = upload.client_id;
    auto& classes = j["classes"];
    classes = Json::array();
    for (const auto& [class_id, stats] : upload.classes) {
        Json entry;
        entry["class_id"] = class_id;
        entry["mav"] = stats.mav;
        entry["distances"] = stats.distances;
        classes.push_back(std::move(entry));
    }
    return j;
}

inline CalibrationUpload calibration_upload_from_json(const Json& j, const std::string& ctx) {
    CalibrationUpload upload;
    upload.client_id = detail::require_field(j, "client_id", ctx).get<int>();
    const Json& classes = detail::require_field(j, "classes", ctx);
    if (!classes.is_array()) throw ProtocolError(ctx + ": \"classes\" must be an array");
    for (const auto& entry : classes) {
        const int class_id = detail::require_field(entry, "class_id", ctx).get<int>();
        ClientClassStats stats;
        stats.mav = detail::to_double_vector(detail::require_field(entry, "mav", ctx),
                                             ctx + ".mav");
        stats.distances = detail::to_double_vector(
            detail::require_field(entry, "distances", ctx), ctx + ".distances");
        if (!upload.classes.emplace(class_id, std::move(stats)).second) {
            throw ProtocolError(ctx + ": duplicate class_id " + std::to_string(class_id));
        }
    }
    return upload;
}

inline Json calibration_config_to_json(const CalibrationConfig& cfg) {
    Json j;
    j["tail_size_eta"] = cfg.tail_size_eta;
    j["alpha_rank"] = cfg.alpha_rank;
    j["epsilon_threshold"] = cfg.epsilon_threshold;
    j["metric"] = to_string(cfg.metric);
    return j;
}

inline CalibrationConfig calibration_config_from_json(const Json& j, const std::string& ctx) {
    CalibrationConfig cfg;
    cfg.tail_size_eta = detail::require_field(j, "tail_size_eta", ctx).get<int>();
    cfg.alpha_rank = detail::require_field(j, "alpha_rank", ctx).get<int>();
    cfg.epsilon_threshold = detail::require_field(j, "epsilon_threshold", ctx).get<double>();
    cfg.metric = metric_from_string(
        detail::require_field(j, "metric", ctx).get<std::string>());
    return cfg;
}

inline Json weibull_to_json(const WeibullModel& w) {
    Json j;
    j["shape_k"] = w.shape_k;
    j["scale_lambda"] = w.scale_lambda;
    j["tail_size_used"] = w.tail_size_used;
    return j;
}

inline WeibullModel weibull_from_json(const Json& j, const std::string& ctx) {
    WeibullModel w;
    w.shape_k = detail::require_field(j, "shape_k", ctx).get<double>();
    w.scale_lambda = detail::require_field(j, "scale_lambda", ctx).get<double>();
    w.tail_size_used = detail::require_field(j, "tail_size_used", ctx).get<int>();
    return w;
}

inline Json global_calibration_to_json(const GlobalCalibration& cal) {
    Json j;
    j["config"] = calibration_config_to_json(cal.config);
    auto& classes = j["classes"];
    classes = Json::array();
    for (const auto& entry : cal.classes) {
        Json e;
        e["class_id"] = entry.class_id;
        e["mav"] = entry.mav;
        e["weibull"] = weibull_to_json(entry.weibull);
        e["distance_count"] = entry.distance_count;
        classes.push_back(std::move(e));
    }
    return j;
}

inline GlobalCalibration global_calibration_from_json(const Json& j, const std::string& ctx) {
    GlobalCalibration cal;
    cal.config = calibration_config_from_json(detail::require_field(j, "config", ctx),
                                              ctx + ".config");
    const Json& classes = detail::require_field(j, "classes", ctx);
    if (!classes.is_array() || classes.empty()) {
        throw ProtocolError(ctx + ": \"classes\" must be a non-empty array");
    }
    cal.classes.resize(classes.size());
    std::vector<bool> seen(classes.size(), false);
    for (const auto& e : classes) {
        ClassCalibration entry;
        entry.class_id = detail::require_field(e, "class_id", ctx).get<int>();
        if (entry.class_id < 0 || entry.class_id >= static_cast<int>(classes.size())) {
            throw ProtocolError(ctx + ": class_id out of range");
        }
        if (seen[static_cast<std::size_t>(entry.class_id)]) {
            throw ProtocolError(ctx + ": duplicate class_id " +
                                std::to_string(entry.class_id));
        }
        seen[static_cast<std::size_t>(entry.class_id)] = true;
        entry.mav = detail::to_double_vector(detail::require_field(e, "mav", ctx),
                                             ctx + ".mav");
        entry.weibull = weibull_from_json(detail::require_field(e, "weibull", ctx),
                                          ctx + ".weibull");
        if (const auto it = e.find("distance_count"); it != e.end()) {
            entry.distance_count = it->get<int>();
        }
        cal.classes[static_cast<std::size_t>(entry.class_id)] = std::move(entry);
    }
    return cal;
}

inline Json message_to_json(const Message& msg) {
    check_message(msg);
    Json j;
    j["type"] = to_string(msg.type);
    j["round"] = msg.round;
    j["sender_id"] = msg.sender_id;
    switch (msg.type) {
    case MessageType::GlobalModel:
        j["payload"] = model_to_json(std::get<GlobalModelPayload>(msg.payload).model);
        break;
    case MessageType::ClientUpdate: {
        const auto& p = std::get<ClientUpdatePayload>(msg.payload);
        Json body = model_to_json(p.model);
        body["sample_count"] = p.sample_count;
        j["payload"] = std::move(body);
        break;
    }
    case MessageType::CalibrationUpload:
        j["payload"] = calibration_upload_to_json(std::get<CalibrationUpload>(msg.payload));
        break;
    case MessageType::GlobalCalibration:
        j["payload"] = global_calibration_to_json(std::get<GlobalCalibration>(msg.payload));
        break;
    case MessageType::Ack:
        j["payload"] = Json::object();
        break;
    }
    return j;
}

inline Message message_from_json(const Json& j, const std::string& ctx = "message") {
    Message msg;
    msg.type = message_type_from_string(
        detail::require_field(j, "type", ctx).get<std::string>());
    msg.round = detail::require_field(j, "round", ctx).get<int>();
    msg.sender_id = detail::require_field(j, "sender_id", ctx).get<int>();
    const Json& payload = detail::require_field(j, "payload", ctx);
    const std::string pctx = ctx + ".payload";
    switch (msg.type) {
    case MessageType::GlobalModel:
        msg.payload = GlobalModelPayload{model_from_json(payload, pctx)};
        break;
    case MessageType::ClientUpdate: {
        ClientUpdatePayload p;
        p.model = model_from_json(payload, pctx);
        p.sample_count = detail::require_field(payload, "sample_count", pctx).get<int>();
        msg.payload = std::move(p);
        break;
    }
    case MessageType::CalibrationUpload:
        msg.payload = calibration_upload_from_json(payload, pctx);
        break;
    case MessageType::GlobalCalibration:
        msg.payload = global_calibration_from_json(payload, pctx);
        break;
    case MessageType::Ack:
        msg.payload = AckPayload{};
        break;
    }
    check_message(msg);
    return msg;
}

inline std::string serialize_message(const Message& msg) { return message_to_json(msg).dump(); }

inline Message deserialize_message(const std::string& bytes, const std::string& ctx = "message") {
    Json j;
    try {
        j = Json::parse(bytes);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(ctx + ": invalid JSON: " + e.what());
    }
    return message_from_json(j, ctx);
}

// ---- artifact files ------------------------------------------------------
// Artifacts on disk are serialized messages with an extra leading "seeds"
// header for provenance; readers ignore the header when reconstructing the
// message.

struct SeedHeader {
    std::uint64_t dataset_seed = 0;
    std::uint64_t training_seed = 0;
};

inline void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write \"" + path + "\"");
    out << body;
    if (!out) throw Error("write failed for \"" + path + "\"");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open \"" + path + "\"");
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return body;
}

inline void save_message_artifact(const std::string& path, const Message& msg,
                                  const SeedHeader& seeds) {
    Json j;
    j["seeds"] = {{"dataset", seeds.dataset_seed}, {"training", seeds.training_seed}};
    Json body = message_to_json(msg);
    for (auto& [key, value] : body.items()) j[key] = std::move(value);
    write_text_file(path, j.dump(2) + "\n");
}

inline Message load_message_artifact(const std::string& path, MessageType expected) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError("\"" + path + "\": invalid JSON: " + e.what());
    }
    Message msg = message_from_json(j, "\"" + path + "\"");
    if (msg.type != expected) {
        throw ProtocolError("\"" + path + "\": expected a " + to_string(expected) +
                            " message, found " + to_string(msg.type));
    }
    return msg;
}

// ---- metrics reports -----------------------------------------------------

inline Json metrics_to_json(const MetricsReport& report, const std::string& phase,
                            const SeedHeader& seeds) {
    Json j;
    j["phase"] = phase;
    j["seeds"] = {{"dataset", seeds.dataset_seed}, {"training", seeds.training_seed}};
    j["num_samples"] = report.counts.total();
    j["accuracy"] = report.accuracy;
    j["macro_f1"] = report.macro_f1;
    auto& per_class = j["per_class"];
    per_class = Json::array();
    for (std::size_t c = 0; c < report.f1.size(); ++c) {
        Json e;
        // index 0 is the unknown class, shown as label -1
        e["class"] = static_cast<int>(c) - 1;
        e["precision"] = report.precision[c];
        e["recall"] = report.recall[c];
        e["f1"] = report.f1[c];
        per_class.push_back(std::move(e));
    }
    j["confusion"] = report.counts.counts;
    return j;
}

inline std::string metrics_csv_header() { return "phase,num_samples,accuracy,macro_f1"; }

inline std::string metrics_csv_row(const std::string& phase, const MetricsReport& report) {
    Json acc = report.accuracy, f1 = report.macro_f1;
    return phase + "," + std::to_string(report.counts.total()) + "," + acc.dump() + "," +
           f1.dump();
}

} // namespace fosr
