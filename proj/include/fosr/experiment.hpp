#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fosr/dataset.hpp"
#include "fosr/evaluation.hpp"
#include "fosr/federation.hpp"
#include "fosr/serialization.hpp"

namespace fosr {

// Everything one end-to-end run needs: data generation, the FL loop, the
// calibration exchange, and the two inference phases.
struct ExperimentConfig {
    DatasetSpec dataset;
    FederationConfig federation;
    CalibrationConfig calibration;
    int hidden_size = 32;
    std::string output_dir = "out";
};

inline void validate_experiment_config(const ExperimentConfig& cfg) {
    check_dataset_spec(cfg.dataset);
    if (cfg.federation.num_clients != cfg.dataset.num_clients) {
        throw ConfigError("federation.num_clients (" +
                          std::to_string(cfg.federation.num_clients) +
                          ") does not match dataset.num_clients (" +
                          std::to_string(cfg.dataset.num_clients) + ")");
    }
    if (cfg.federation.global_rounds < 1) {
        throw ConfigError("federation.global_rounds must be >= 1");
    }
    if (!(cfg.federation.training.learning_rate >= 0.0) ||
        cfg.federation.training.batch_size < 1 || cfg.federation.training.local_epochs < 1) {
        throw ConfigError("federation.training: learning_rate must be >= 0, "
                          "batch_size and local_epochs must be >= 1");
    }
    if (cfg.calibration.alpha_rank > cfg.dataset.num_classes) {
        throw ConfigError("calibration.alpha_rank (" +
                          std::to_string(cfg.calibration.alpha_rank) +
                          ") exceeds dataset.K (" +
                          std::to_string(cfg.dataset.num_classes) + ")");
    }
    if (cfg.calibration.alpha_rank < 1 || cfg.calibration.tail_size_eta < 2) {
        throw ConfigError("calibration: alpha_rank must be >= 1 and tail_size_eta >= 2");
    }
    if (!(cfg.calibration.epsilon_threshold >= 0.0 &&
          cfg.calibration.epsilon_threshold <= 1.0)) {
        throw ConfigError("calibration.epsilon_threshold must be in [0, 1]");
    }
    if (cfg.hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
    if (cfg.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

namespace detail {

struct ConfigReader {
    const Json& j;
    std::string path;

    void check_known(std::initializer_list<const char*> keys) const {
        for (const auto& [key, value] : j.items()) {
            (void)value;
            bool known = false;
            for (const char* k : keys) {
                if (key == k) {
                    known = true;
                    break;
                }
            }
            if (!known) throw ConfigError("unknown field " + path + key);
        }
    }

    template <typename T>
    void read(const char* key, T& out) const {
        const auto it = j.find(key);
        if (it == j.end()) return;
        try {
            out = it->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("field " + path + key + " has the wrong type");
        }
    }

    void read_metric(const char* key, DistanceMetric& out) const {
        const auto it = j.find(key);
        if (it == j.end()) return;
        if (!it->is_string()) throw ConfigError("field " + path + key + " must be a string");
        try {
            out = metric_from_string(it->get<std::string>());
        } catch (const InvalidInputError& e) {
            throw ConfigError("field " + path + key + ": " + e.what());
        }
    }

    void read_weighting(const char* key, AggregationWeighting& out) const {
        const auto it = j.find(key);
        if (it == j.end()) return;
        if (!it->is_string()) throw ConfigError("field " + path + key + " must be a string");
        try {
            out = aggregation_weighting_from_string(it->get<std::string>());
        } catch (const InvalidInputError& e) {
            throw ConfigError("field " + path + key + ": " + e.what());
        }
    }
};

} // namespace detail

// Parses an experiment config. Every field has a desk-scale default, so a
// config only states what it overrides; unknown fields are rejected.
inline ExperimentConfig experiment_config_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("config root must be an object");
    ExperimentConfig cfg;
    detail::ConfigReader root{j, ""};
    root.check_known({"dataset", "federation", "calibration", "hidden_size", "output_dir"});
    bool alpha_given = false;

    if (const auto it = j.find("dataset"); it != j.end()) {
        detail::ConfigReader r{*it, "dataset."};
        r.check_known({"K", "D", "num_clients", "train_per_class_per_client",
                       "test_per_class", "num_unknown", "cluster_std",
                       "cluster_center_scale", "seed"});
        r.read("K", cfg.dataset.num_classes);
        r.read("D", cfg.dataset.feature_dim);
        r.read("num_clients", cfg.dataset.num_clients);
        r.read("train_per_class_per_client", cfg.dataset.train_per_class_per_client);
        r.read("test_per_class", cfg.dataset.test_per_class);
        r.read("num_unknown", cfg.dataset.num_unknown);
        r.read("cluster_std", cfg.dataset.cluster_std);
        r.read("cluster_center_scale", cfg.dataset.cluster_center_scale);
        r.read("seed", cfg.dataset.seed);
    }
    cfg.federation.num_clients = cfg.dataset.num_clients;
    if (const auto it = j.find("federation"); it != j.end()) {
        detail::ConfigReader r{*it, "federation."};
        r.check_known({"num_clients", "global_rounds", "training", "aggregation_weighting"});
        r.read("num_clients", cfg.federation.num_clients);
        r.read("global_rounds", cfg.federation.global_rounds);
        r.read_weighting("aggregation_weighting", cfg.federation.weighting);
        if (const auto t = it->find("training"); t != it->end()) {
            detail::ConfigReader rt{*t, "federation.training."};
            rt.check_known({"learning_rate", "batch_size", "local_epochs", "seed"});
            rt.read("learning_rate", cfg.federation.training.learning_rate);
            rt.read("batch_size", cfg.federation.training.batch_size);
            rt.read("local_epochs", cfg.federation.training.local_epochs);
            rt.read("seed", cfg.federation.training.seed);
        }
    }
    if (const auto it = j.find("calibration"); it != j.end()) {
        detail::ConfigReader r{*it, "calibration."};
        r.check_known({"tail_size_eta", "alpha_rank", "epsilon_threshold", "metric"});
        r.read("tail_size_eta", cfg.calibration.tail_size_eta);
        alpha_given = it->contains("alpha_rank");
        r.read("alpha_rank", cfg.calibration.alpha_rank);
        r.read("epsilon_threshold", cfg.calibration.epsilon_threshold);
        r.read_metric("metric", cfg.calibration.metric);
    }
    if (!alpha_given) cfg.calibration.alpha_rank = std::min(10, cfg.dataset.num_classes);
    root.read("hidden_size", cfg.hidden_size);
    root.read("output_dir", cfg.output_dir);
    return cfg;
}

// Config files may carry // comments; the wire format stays strict JSON.
inline ExperimentConfig load_experiment_config(const std::string& path) {
    Json j;
    try {
        j = Json::parse(read_text_file(path), nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("\"" + path + "\": invalid JSON: " + e.what());
    }
    return experiment_config_from_json(j);
}

struct ExperimentResult {
    ModelParameters model;
    GlobalCalibration calibration;
    MetricsReport closed_metrics;
    MetricsReport open_metrics;
    std::vector<double> round_train_accuracy;
    std::vector<std::string> artifact_paths;
};

namespace detail {

template <typename F>
auto run_phase(const char* phase, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(std::string(phase) + ": " + e.what());
    }
}

} // namespace detail

// The full pipeline of one experiment: generate -> federated training ->
// closed-set evaluation (plain softmax argmax) -> federated OpenMax
// calibration -> open-set evaluation (predict_open). Artifacts (final
// model, global calibration, both metrics reports) are written only after
// every phase succeeded, so a failed run leaves no partial reports.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, Transport& transport,
                                       int workers = 0, bool write_artifacts = true) {
    validate_experiment_config(cfg);
    const SeedHeader seeds{cfg.dataset.seed, cfg.federation.training.seed};

    GeneratedDataset data = detail::run_phase("dataset generation",
                                              [&] { return generate_dataset(cfg.dataset); });

    ExperimentResult result;
    const ModelDims dims{cfg.dataset.feature_dim, cfg.hidden_size, cfg.dataset.num_classes};
    TrainingRunResult training = detail::run_phase("training", [&] {
        return run_training(cfg.federation, dims, data.client_train,
                            cfg.federation.training.seed, transport, workers);
    });
    result.model = std::move(training.model);
    result.round_train_accuracy = std::move(training.round_train_accuracy);

    result.closed_metrics = detail::run_phase("closed-set inference", [&] {
        return evaluate_closed_set(result.model, data.closed_test);
    });

    result.calibration = detail::run_phase("calibration", [&] {
        return run_calibration_exchange(result.model, cfg.federation, cfg.calibration,
                                        data.client_train, transport, workers);
    });

    result.open_metrics = detail::run_phase("open-set inference", [&] {
        std::vector<Prediction> predictions;
        std::vector<int> truths;
        predictions.reserve(data.open_test.size());
        truths.reserve(data.open_test.size());
        for (const auto& sample : data.open_test) {
            predictions.push_back(predict_open(sample.features, result.model,
                                               result.calibration));
            truths.push_back(sample.label);
        }
        return evaluate_open_set(predictions, truths, cfg.dataset.num_classes);
    });

    if (write_artifacts) {
        detail::run_phase("artifact output", [&] {
            namespace fs = std::filesystem;
            fs::create_directories(cfg.output_dir);
            const auto path = [&](const char* name) {
                return (fs::path(cfg.output_dir) / name).string();
            };
            const std::string model_path = path("model.json");
            save_message_artifact(model_path,
                                  make_message(MessageType::GlobalModel,
                                               cfg.federation.global_rounds, kServerId,
                                               GlobalModelPayload{result.model}),
                                  seeds);
            const std::string cal_path = path("calibration.json");
            save_message_artifact(cal_path,
                                  make_message(MessageType::GlobalCalibration,
                                               cfg.federation.global_rounds, kServerId,
                                               result.calibration),
                                  seeds);
            const std::string closed_path = path("metrics_closed.json");
            write_text_file(closed_path,
                            metrics_to_json(result.closed_metrics, "closed_set", seeds).dump(2) +
                                "\n");
            const std::string open_path = path("metrics_open.json");
            write_text_file(open_path,
                            metrics_to_json(result.open_metrics, "open_set", seeds).dump(2) +
                                "\n");
            result.artifact_paths = {model_path, cal_path, closed_path, open_path};
            return 0;
        });
    }
    return result;
}

} // namespace fosr
