#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "fosr/classifier.hpp"
#include "fosr/error.hpp"
#include "fosr/openmax.hpp"
#include "fosr/random.hpp"
#include "fosr/transport.hpp"

namespace fosr {

enum class AggregationWeighting { Uniform, BySampleCount };

inline std::string to_string(AggregationWeighting w) {
    return w == AggregationWeighting::Uniform ? "uniform" : "by_sample_count";
}

inline AggregationWeighting aggregation_weighting_from_string(const std::string& s) {
    if (s == "uniform") return AggregationWeighting::Uniform;
    if (s == "by_sample_count") return AggregationWeighting::BySampleCount;
    throw InvalidInputError("unknown aggregation weighting: \"" + s + "\"");
}

struct FederationConfig {
    int num_clients = 5;
    int global_rounds = 5;
    TrainingConfig training;
    AggregationWeighting weighting = AggregationWeighting::Uniform;
    int receive_timeout_ms = 30000;
};

struct ModelUpdate {
    int client_id = 0;
    ModelParameters model;
    int sample_count = 0;
};

// FedAvg: element-wise average of the client models, optionally weighted by
// sample counts. Updates are processed in ascending client id regardless of
// input order, so the result is bit-stable under permutation; extended-
// precision accumulation keeps the average of identical models exact.
inline ModelParameters fedavg(std::vector<ModelUpdate> updates, AggregationWeighting weighting) {
    if (updates.empty()) throw InvalidInputError("fedavg: no updates");
    std::sort(updates.begin(), updates.end(),
              [](const ModelUpdate& a, const ModelUpdate& b) {
                  return a.client_id < b.client_id;
              });
    const ModelParameters& first = updates.front().model;
    for (const auto& u : updates) {
        if (u.model.shapes != first.shapes || u.model.values.size() != first.values.size()) {
            throw ProtocolError("fedavg: model shape mismatch from client " +
                                std::to_string(u.client_id));
        }
    }
    std::vector<long double> sum(first.values.size(), 0.0L);
    long double total = 0.0L;
    if (weighting == AggregationWeighting::Uniform) {
        for (const auto& u : updates) {
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += u.model.values[i];
        }
        total = static_cast<long double>(updates.size());
    } else {
        for (const auto& u : updates) {
            if (u.sample_count < 0) throw InvalidInputError("fedavg: negative sample count");
            total += static_cast<long double>(u.sample_count);
        }
        if (total <= 0.0L) throw InvalidInputError("fedavg: zero total sample count");
        for (const auto& u : updates) {
            const long double w = static_cast<long double>(u.sample_count);
            for (std::size_t i = 0; i < sum.size(); ++i) {
                sum[i] += w * static_cast<long double>(u.model.values[i]);
            }
        }
    }
    ModelParameters out;
    out.shapes = first.shapes;
    out.values.resize(first.values.size());
    for (std::size_t i = 0; i < sum.size(); ++i) {
        out.values[i] = static_cast<double>(sum[i] / total);
    }
    return out;
}

struct ModelDims {
    int input_dim = 0;
    int hidden_dim = 32;
    int num_classes = 0;
};

struct TrainingRunResult {
    ModelParameters model;
    std::vector<double> round_train_accuracy; // mean over clients, one per round
};

namespace detail {

// Runs `work(client)` for every client id, fanned out over up to `workers`
// threads (0 means one thread per client). Each client's work is
// independent, so results do not depend on the schedule. Exceptions are
// re-thrown for the lowest affected client id.
inline void for_each_client(int num_clients, int workers,
                            const std::function<void(int)>& work) {
    if (workers <= 0) workers = num_clients;
    workers = std::min(workers, num_clients);
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(num_clients));
    if (workers <= 1) {
        for (int c = 0; c < num_clients; ++c) {
            try {
                work(c);
            } catch (...) {
                errors[static_cast<std::size_t>(c)] = std::current_exception();
            }
        }
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (int c = w; c < num_clients; c += workers) {
                    try {
                        work(c);
                    } catch (...) {
                        errors[static_cast<std::size_t>(c)] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// Collects `count` messages of one type addressed to the server. On timeout
// the error names the clients that never reported.
inline std::vector<Message> collect_from_clients(Transport& transport, int count,
                                                 MessageType expected, int round,
                                                 std::chrono::milliseconds timeout,
                                                 const std::string& what) {
    std::vector<Message> received;
    std::set<int> senders;
    for (int i = 0; i < count; ++i) {
        Message msg;
        try {
            msg = transport.receive(kServerId, timeout);
        } catch (const TimeoutError&) {
            std::string missing;
            for (int c = 0; c < count; ++c) {
                if (!senders.count(c)) missing += (missing.empty() ? "" : ", ") + std::to_string(c);
            }
            throw TimeoutError(what + " aborted in round " + std::to_string(round) +
                               ": no " + to_string(expected) + " from client(s) " + missing);
        }
        if (msg.type != expected || msg.round != round) {
            throw ProtocolError(what + ": unexpected " + to_string(msg.type) +
                                " (round " + std::to_string(msg.round) + ") from " +
                                std::to_string(msg.sender_id));
        }
        senders.insert(msg.sender_id);
        received.push_back(std::move(msg));
    }
    return received;
}

} // namespace detail

// The synchronous FedAvg loop: per round the server broadcasts the global
// model, every client trains locally and replies, and the server averages
// the updates. Deterministic for a fixed seed: the model is initialized
// from derive_seed(seed, 0, 0) and client c trains in round r with
// derive_seed(seed, r, c).
inline TrainingRunResult run_training(const FederationConfig& cfg, const ModelDims& dims,
                                      const std::vector<std::vector<LabeledSample>>& client_data,
                                      std::uint64_t seed, Transport& transport,
                                      int workers = 0) {
    if (cfg.num_clients < 1 || cfg.global_rounds < 1) {
        throw InvalidInputError("run_training: num_clients and global_rounds must be >= 1");
    }
    if (static_cast<int>(client_data.size()) != cfg.num_clients) {
        throw InvalidInputError("run_training: client_data size does not match num_clients");
    }
    for (const auto& data : client_data) {
        if (data.empty()) throw InvalidInputError("run_training: a client has no data");
    }
    const auto timeout = std::chrono::milliseconds(cfg.receive_timeout_ms);

    TrainingRunResult result;
    result.model = init_model(dims.input_dim, dims.hidden_dim, dims.num_classes,
                              derive_seed(seed, 0, 0));
    for (int round = 1; round <= cfg.global_rounds; ++round) {
        for (int c = 0; c < cfg.num_clients; ++c) {
            transport.send(c, make_message(MessageType::GlobalModel, round, kServerId,
                                           GlobalModelPayload{result.model}));
        }
        detail::for_each_client(cfg.num_clients, workers, [&](int c) {
            Message msg = transport.receive(c, timeout);
            if (msg.type != MessageType::GlobalModel) {
                throw ProtocolError("client " + std::to_string(c) +
                                    ": expected global_model, got " + to_string(msg.type));
            }
            TrainingConfig local_cfg = cfg.training;
            local_cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(round),
                                         static_cast<std::uint64_t>(c));
            const auto& data = client_data[static_cast<std::size_t>(c)];
            ModelParameters trained =
                train_local(std::get<GlobalModelPayload>(msg.payload).model, data, local_cfg);
            transport.send(kServerId,
                           make_message(MessageType::ClientUpdate, round, c,
                                        ClientUpdatePayload{std::move(trained),
                                                            static_cast<int>(data.size())}));
        });
        auto messages = detail::collect_from_clients(transport, cfg.num_clients,
                                                     MessageType::ClientUpdate, round,
                                                     timeout, "training round");
        std::vector<ModelUpdate> updates;
        updates.reserve(messages.size());
        for (auto& msg : messages) {
            auto& p = std::get<ClientUpdatePayload>(msg.payload);
            updates.push_back({msg.sender_id, std::move(p.model), p.sample_count});
        }
        result.model = fedavg(std::move(updates), cfg.weighting);

        double acc = 0.0;
        for (const auto& data : client_data) acc += evaluate_accuracy(result.model, data);
        result.round_train_accuracy.push_back(acc / static_cast<double>(cfg.num_clients));
    }
    return result;
}

// Post-training calibration exchange: the server broadcasts the final
// model, each client answers with its local MAVs and distances, the server
// aggregates them into the global calibration and broadcasts that back.
// Clients acknowledge so the exchange ends cleanly.
inline GlobalCalibration run_calibration_exchange(
    const ModelParameters& model, const FederationConfig& cfg,
    const CalibrationConfig& cal_cfg,
    const std::vector<std::vector<LabeledSample>>& client_data, Transport& transport,
    int workers = 0, MavWeighting mav_weighting = MavWeighting::Uniform) {
    if (static_cast<int>(client_data.size()) != cfg.num_clients) {
        throw InvalidInputError(
            "run_calibration_exchange: client_data size does not match num_clients");
    }
    const auto timeout = std::chrono::milliseconds(cfg.receive_timeout_ms);
    const int round = cfg.global_rounds;
    const int num_classes = static_cast<int>(model.output_dim());
    check_calibration_config(cal_cfg, num_classes);

    for (int c = 0; c < cfg.num_clients; ++c) {
        transport.send(c, make_message(MessageType::GlobalModel, round, kServerId,
                                       GlobalModelPayload{model}));
    }
    detail::for_each_client(cfg.num_clients, workers, [&](int c) {
        Message msg = transport.receive(c, timeout);
        if (msg.type != MessageType::GlobalModel) {
            throw ProtocolError("client " + std::to_string(c) +
                                ": expected global_model, got " + to_string(msg.type));
        }
        CalibrationUpload upload =
            build_client_upload(c, std::get<GlobalModelPayload>(msg.payload).model,
                                client_data[static_cast<std::size_t>(c)], cal_cfg.metric);
        transport.send(kServerId, make_message(MessageType::CalibrationUpload, round, c,
                                               std::move(upload)));
    });
    auto messages = detail::collect_from_clients(transport, cfg.num_clients,
                                                 MessageType::CalibrationUpload, round,
                                                 timeout, "calibration exchange");
    std::vector<CalibrationUpload> uploads;
    uploads.reserve(messages.size());
    for (auto& msg : messages) {
        uploads.push_back(std::move(std::get<CalibrationUpload>(msg.payload)));
    }
    GlobalCalibration cal = aggregate_uploads(uploads, num_classes, cal_cfg, mav_weighting);

    for (int c = 0; c < cfg.num_clients; ++c) {
        transport.send(c, make_message(MessageType::GlobalCalibration, round, kServerId, cal));
    }
    detail::for_each_client(cfg.num_clients, workers, [&](int c) {
        Message msg = transport.receive(c, timeout);
        if (msg.type != MessageType::GlobalCalibration) {
            throw ProtocolError("client " + std::to_string(c) +
                                ": expected global_calibration, got " + to_string(msg.type));
        }
        transport.send(kServerId, make_message(MessageType::Ack, round, c, AckPayload{}));
    });
    detail::collect_from_clients(transport, cfg.num_clients, MessageType::Ack, round, timeout,
                                 "calibration exchange");
    return cal;
}

} // namespace fosr
