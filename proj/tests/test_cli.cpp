#include <catch2/catch.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unistd.h>

#include "fosr/dataset.hpp"
#include "fosr/experiment.hpp"
#include "fosr/serialization.hpp"

using namespace fosr;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output; // stdout only
};

CliResult run_cli(const std::string& args) {
    static int counter = 0;
    const auto out_path = fs::temp_directory_path() /
                          ("fosr_cli_out_" + std::to_string(::getpid()) + "_" +
                           std::to_string(counter++));
    const std::string cmd = std::string(FOSR_CLI_PATH) + " " + args + " > " +
                            out_path.string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_path);
    std::stringstream buf;
    buf << in.rdbuf();
    result.output = buf.str();
    fs::remove(out_path);
    return result;
}

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("fosr_clitest_" + std::to_string(::getpid()) +
                                            "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string small_config(const TempDir& dir, const std::string& output_dir,
                         int alpha_rank = 3) {
    Json j;
    j["dataset"] = {{"K", 3},
                    {"D", 4},
                    {"num_clients", 2},
                    {"train_per_class_per_client", 12},
                    {"test_per_class", 6},
                    {"num_unknown", 30},
                    {"cluster_std", 0.4},
                    {"cluster_center_scale", 4.0},
                    {"seed", 7}};
    j["federation"] = {{"num_clients", 2},
                       {"global_rounds", 2},
                       {"training",
                        {{"learning_rate", 0.08},
                         {"batch_size", 8},
                         {"local_epochs", 2},
                         {"seed", 7}}}};
    j["calibration"] = {{"tail_size_eta", 8}, {"alpha_rank", alpha_rank},
                        {"epsilon_threshold", 0.0}, {"metric", "euclidean"}};
    j["hidden_size"] = 8;
    j["output_dir"] = output_dir;
    const std::string path = dir.file("config.json");
    write_text_file(path, j.dump(2));
    return path;
}

} // namespace

TEST_CASE("the bundled configs are valid and desk scale runs end to end") {
    const std::string desk = std::string(FOSR_CONFIG_DIR) + "/desk_scale.json";
    const std::string full = std::string(FOSR_CONFIG_DIR) + "/full_scale.json";
    CHECK_NOTHROW(validate_experiment_config(load_experiment_config(full)));
    CHECK_NOTHROW(validate_experiment_config(load_experiment_config(desk)));

    TempDir dir;
    // the bundled config writes to a relative output_dir; run from the temp dir
    const auto out_path = dir.file("stdout.txt");
    const std::string cmd = "cd " + dir.path.string() + " && " + FOSR_CLI_PATH +
                            " run " + desk + " > " + out_path + " 2>/dev/null";
    REQUIRE(std::system(cmd.c_str()) == 0);
    int files = 0;
    for (const auto& entry : fs::directory_iterator(dir.file("out/desk_scale"))) {
        (void)entry;
        ++files;
    }
    CHECK(files == 4);
}

TEST_CASE("cli run produces the four artifacts and a summary") {
    TempDir dir;
    const auto config = small_config(dir, dir.file("out"));
    const auto result = run_cli("run " + config);
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("phase") != std::string::npos);
    CHECK(result.output.find("closed_set") != std::string::npos);
    CHECK(result.output.find("open_set") != std::string::npos);

    int files = 0;
    for (const auto& entry : fs::directory_iterator(dir.file("out"))) {
        (void)entry;
        ++files;
    }
    CHECK(files == 4);
    CHECK(fs::exists(dir.file("out/model.json")));
    CHECK(fs::exists(dir.file("out/calibration.json")));
    CHECK(fs::exists(dir.file("out/metrics_closed.json")));
    CHECK(fs::exists(dir.file("out/metrics_open.json")));
}

TEST_CASE("cli rejects alpha_rank above K naming both fields") {
    TempDir dir;
    const auto config = small_config(dir, dir.file("out"), 9);
    const auto result = run_cli("run " + config);
    CHECK(result.exit_code != 0);
    CHECK_FALSE(fs::exists(dir.file("out/metrics_closed.json")));
    CHECK_FALSE(fs::exists(dir.file("out/metrics_open.json")));
}

TEST_CASE("cli runs are byte-identical for the same config and seed") {
    TempDir dir;
    const auto config_a = small_config(dir, dir.file("a"));
    REQUIRE(run_cli("run " + config_a).exit_code == 0);
    TempDir dir_b;
    const auto config_b = small_config(dir_b, dir_b.file("b"));
    REQUIRE(run_cli("run " + config_b).exit_code == 0);

    for (const char* name : {"metrics_closed.json", "metrics_open.json"}) {
        const auto a = read_text_file(dir.file(std::string("a/") + name));
        const auto b = read_text_file(dir_b.file(std::string("b/") + name));
        CHECK(a == b);
    }
}

TEST_CASE("cli generate emits loadable datasets") {
    TempDir dir;
    const auto config = small_config(dir, dir.file("out"));
    const auto result = run_cli("generate " + config + " --emit " + dir.file("data"));
    CHECK(result.exit_code == 0);
    CHECK(fs::exists(dir.file("data/client_0.csv")));
    CHECK(fs::exists(dir.file("data/client_1.csv")));
    CHECK(fs::exists(dir.file("data/test_closed.csv")));
    CHECK(fs::exists(dir.file("data/test_open.csv")));

    const auto open = load_samples(dir.file("data/test_open.csv"));
    CHECK(open.size() == 3 * 6 + 30);
    const auto train = load_samples(dir.file("data/client_0.csv"));
    CHECK(train.size() == 3 * 12);
}

TEST_CASE("cli infer reproduces the stored open-set confusion counts") {
    TempDir dir;
    const auto config = small_config(dir, dir.file("out"));
    REQUIRE(run_cli("run " + config).exit_code == 0);
    REQUIRE(run_cli("generate " + config + " --emit " + dir.file("data")).exit_code == 0);

    const auto result = run_cli("infer " + dir.file("out/calibration.json") + " " +
                                dir.file("out/model.json") + " " +
                                dir.file("data/test_open.csv"));
    REQUIRE(result.exit_code == 0);

    // parse "index,label,probability" lines and recount the confusion matrix
    const auto truths = load_samples(dir.file("data/test_open.csv"));
    ConfusionMatrix recounted(3);
    std::istringstream lines(result.output);
    std::string line;
    std::size_t index = 0;
    while (std::getline(lines, line)) {
        REQUIRE(index < truths.size());
        const auto first = line.find(',');
        const auto second = line.find(',', first + 1);
        REQUIRE(first != std::string::npos);
        REQUIRE(second != std::string::npos);
        CHECK(line.substr(0, first) == std::to_string(index));
        const std::string label = line.substr(first + 1, second - first - 1);
        const double top = std::stod(line.substr(second + 1));
        CHECK(top > 0.0);
        CHECK(top <= 1.0);
        recounted.add(truths[index].label,
                      label == "unknown" ? kUnknownLabel : std::stoi(label));
        ++index;
    }
    CHECK(index == truths.size());

    const Json stored = Json::parse(read_text_file(dir.file("out/metrics_open.json")));
    const auto confusion = stored["confusion"];
    REQUIRE(confusion.size() == recounted.counts.size());
    for (std::size_t r = 0; r < recounted.counts.size(); ++r) {
        for (std::size_t c = 0; c < recounted.counts.size(); ++c) {
            CHECK(confusion[r][c].get<std::int64_t>() == recounted.counts[r][c]);
        }
    }
}

TEST_CASE("cli infer rejects an empty data file") {
    TempDir dir;
    const auto config = small_config(dir, dir.file("out"));
    REQUIRE(run_cli("run " + config).exit_code == 0);
    write_text_file(dir.file("empty.csv"), "");
    const auto result = run_cli("infer " + dir.file("out/calibration.json") + " " +
                                dir.file("out/model.json") + " " + dir.file("empty.csv"));
    CHECK(result.exit_code != 0);
}

TEST_CASE("cli infer rejects swapped artifacts with the file named") {
    TempDir dir;
    const auto config = small_config(dir, dir.file("out"));
    REQUIRE(run_cli("run " + config).exit_code == 0);
    REQUIRE(run_cli("generate " + config + " --emit " + dir.file("data")).exit_code == 0);
    const auto result = run_cli("infer " + dir.file("out/model.json") + " " +
                                dir.file("out/calibration.json") + " " +
                                dir.file("data/test_open.csv"));
    CHECK(result.exit_code != 0);
}

TEST_CASE("cli run works over the socket transport") {
    TempDir dir;
    const auto config = small_config(dir, dir.file("out"));
    const auto loopback = run_cli("run " + config);
    REQUIRE(loopback.exit_code == 0);
    const auto closed_loopback = read_text_file(dir.file("out/metrics_closed.json"));

    TempDir dir2;
    const auto config2 = small_config(dir2, dir2.file("out"));
    const auto socket = run_cli("run --transport socket " + config2);
    REQUIRE(socket.exit_code == 0);
    CHECK(read_text_file(dir2.file("out/metrics_closed.json")) == closed_loopback);
}
