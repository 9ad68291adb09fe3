// Command-line experiment runner: `run` drives the three phases end to end
// from a config file, `generate` emits datasets for reuse, `infer` scores a
// sample file against stored model/calibration artifacts.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fosr/fosr.hpp"

namespace {

std::unique_ptr<fosr::Transport> make_transport(const std::string& kind, int num_clients,
                                                bool record_wire = false) {
    if (kind == "loopback") return std::make_unique<fosr::LoopbackTransport>(record_wire);
    if (kind == "socket") {
        std::vector<int> participants{fosr::kServerId};
        for (int c = 0; c < num_clients; ++c) participants.push_back(c);
        return std::make_unique<fosr::SocketTransport>(participants);
    }
    throw fosr::ConfigError("unknown transport \"" + kind + "\"");
}

void apply_seed_override(fosr::ExperimentConfig& cfg, const std::optional<std::uint64_t>& seed) {
    if (!seed) return;
    cfg.dataset.seed = *seed;
    cfg.federation.training.seed = *seed;
}

int cmd_run(const std::string& config_path, const std::optional<std::uint64_t>& seed,
            int workers, const std::string& transport_kind) {
    fosr::ExperimentConfig cfg = fosr::load_experiment_config(config_path);
    apply_seed_override(cfg, seed);
    fosr::validate_experiment_config(cfg);
    auto transport = make_transport(transport_kind, cfg.federation.num_clients);
    const fosr::ExperimentResult result = fosr::run_experiment(cfg, *transport, workers);

    const double train_acc = result.round_train_accuracy.empty()
                                 ? 0.0
                                 : result.round_train_accuracy.back();
    std::printf("%-12s %-10s %s\n", "phase", "metric", "value");
    std::printf("%-12s %-10s %.6f\n", "training", "accuracy", train_acc);
    std::printf("%-12s %-10s %.6f\n", "closed_set", "accuracy", result.closed_metrics.accuracy);
    std::printf("%-12s %-10s %.6f\n", "closed_set", "macro_f1", result.closed_metrics.macro_f1);
    std::printf("%-12s %-10s %.6f\n", "open_set", "accuracy", result.open_metrics.accuracy);
    std::printf("%-12s %-10s %.6f\n", "open_set", "macro_f1", result.open_metrics.macro_f1);
    std::printf("\n%s\n", fosr::metrics_csv_header().c_str());
    std::printf("%s\n", fosr::metrics_csv_row("closed_set", result.closed_metrics).c_str());
    std::printf("%s\n", fosr::metrics_csv_row("open_set", result.open_metrics).c_str());
    std::printf("\nartifacts:\n");
    for (const auto& path : result.artifact_paths) std::printf("  %s\n", path.c_str());
    return 0;
}

int cmd_infer(const std::string& calibration_path, const std::string& model_path,
              const std::string& data_path) {
    const fosr::Message cal_msg =
        fosr::load_message_artifact(calibration_path, fosr::MessageType::GlobalCalibration);
    const auto& calibration = std::get<fosr::GlobalCalibration>(cal_msg.payload);
    const fosr::Message model_msg =
        fosr::load_message_artifact(model_path, fosr::MessageType::GlobalModel);
    const auto& model = std::get<fosr::GlobalModelPayload>(model_msg.payload).model;
    if (static_cast<int>(model.output_dim()) != calibration.num_classes()) {
        throw fosr::ProtocolError("\"" + model_path + "\" predicts " +
                                  std::to_string(model.output_dim()) + " classes but \"" +
                                  calibration_path + "\" calibrates " +
                                  std::to_string(calibration.num_classes()));
    }
    const auto samples = fosr::load_samples(data_path);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].features.size() != model.input_dim()) {
            throw fosr::ProtocolError("\"" + data_path + "\": sample " + std::to_string(i) +
                                      " has " + std::to_string(samples[i].features.size()) +
                                      " features but the model expects " +
                                      std::to_string(model.input_dim()));
        }
        const fosr::Prediction pred =
            fosr::predict_open(samples[i].features, model, calibration);
        const double top =
            *std::max_element(pred.probabilities.begin(), pred.probabilities.end());
        const std::string label = pred.label == fosr::kUnknownLabel
                                      ? "unknown"
                                      : std::to_string(pred.label);
        std::printf("%zu,%s,%.6f\n", i, label.c_str(), top);
    }
    return 0;
}

int cmd_generate(const std::string& config_path, const std::string& emit_dir,
                 const std::optional<std::uint64_t>& seed) {
    fosr::ExperimentConfig cfg = fosr::load_experiment_config(config_path);
    apply_seed_override(cfg, seed);
    fosr::check_dataset_spec(cfg.dataset);
    const fosr::GeneratedDataset data = fosr::generate_dataset(cfg.dataset);

    namespace fs = std::filesystem;
    fs::create_directories(emit_dir);
    for (std::size_t c = 0; c < data.client_train.size(); ++c) {
        const auto path = fs::path(emit_dir) / ("client_" + std::to_string(c) + ".csv");
        fosr::save_samples(path.string(), data.client_train[c]);
        std::printf("%s: %zu samples\n", path.c_str(), data.client_train[c].size());
    }
    const auto closed = fs::path(emit_dir) / "test_closed.csv";
    fosr::save_samples(closed.string(), data.closed_test);
    std::printf("%s: %zu samples\n", closed.c_str(), data.closed_test.size());
    const auto open = fs::path(emit_dir) / "test_open.csv";
    fosr::save_samples(open.string(), data.open_test);
    std::printf("%s: %zu samples\n", open.c_str(), data.open_test.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated open-set recognition toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::uint64_t> seed;
    int workers = 0;
    std::string transport_kind = "loopback";
    app.add_option("--seed", seed, "override the dataset and training seeds");
    app.add_option("--workers", workers,
                   "parallel client workers (default: one per client)");
    app.add_option("--transport", transport_kind, "message transport")
        ->check(CLI::IsMember({"loopback", "socket"}));

    std::string config_path, calibration_path, model_path, data_path, emit_dir;

    auto* run = app.add_subcommand("run", "run the full experiment from a config file");
    run->add_option("config", config_path, "experiment config (JSON)")->required();

    auto* infer = app.add_subcommand("infer", "predict labels for a sample file");
    infer->add_option("calibration", calibration_path, "global calibration artifact")
        ->required();
    infer->add_option("model", model_path, "model artifact")->required();
    infer->add_option("data", data_path, "delimited sample file")->required();

    auto* generate = app.add_subcommand("generate", "generate and emit datasets");
    generate->add_option("config", config_path, "experiment config (JSON)")->required();
    generate->add_option("--emit", emit_dir, "directory for the emitted files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, seed, workers, transport_kind);
        if (infer->parsed()) return cmd_infer(calibration_path, model_path, data_path);
        if (generate->parsed()) return cmd_generate(config_path, emit_dir, seed);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
