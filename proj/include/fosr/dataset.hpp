#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fosr/classifier.hpp"
#include "fosr/error.hpp"
#include "fosr/numerics.hpp"
#include "fosr/openmax.hpp"
#include "fosr/random.hpp"

namespace fosr {

// Synthetic Gaussian-cluster stand-in for the out-of-scope face datasets.
// Known identities are clusters around uniformly drawn centers; unknown
// identities are singleton samples around rejected-away centers.
struct DatasetSpec {
    int num_classes = 10;                // K
    int feature_dim = 16;                // D
    int num_clients = 5;
    int train_per_class_per_client = 60;
    int test_per_class = 50;
    int num_unknown = 500;
    double cluster_std = 0.5;
    double cluster_center_scale = 5.0;
    std::uint64_t seed = 1;
};

struct OpenSetSample {
    FeatureVector features;
    int label = kUnknownLabel; // class id, or kUnknownLabel
};

struct GeneratedDataset {
    std::vector<std::vector<LabeledSample>> client_train; // one per client
    std::vector<LabeledSample> closed_test;               // known classes only
    std::vector<OpenSetSample> open_test;                 // closed_test + unknowns
    std::vector<FeatureVector> known_centers;             // one per class
    std::vector<FeatureVector> unknown_centers;           // one per unknown identity
};

inline void check_dataset_spec(const DatasetSpec& spec) {
    if (spec.num_classes < 1 || spec.feature_dim < 1 || spec.num_clients < 1 ||
        spec.train_per_class_per_client < 1 || spec.test_per_class < 1 ||
        spec.num_unknown < 1) {
        throw InvalidInputError("dataset spec: all counts must be >= 1");
    }
    if (!(spec.cluster_std > 0.0) || !(spec.cluster_center_scale > 0.0)) {
        throw InvalidInputError("dataset spec: cluster_std and cluster_center_scale must be > 0");
    }
}

// Deterministic draw order: known centers, unknown centers (rejection
// sampled to stay >= 3 * cluster_std away from every known center), client
// train sets in client/class order, the closed test set, then one sample
// per unknown center. Every client gets the same per-class counts (IID).
inline GeneratedDataset generate_dataset(const DatasetSpec& spec) {
    check_dataset_spec(spec);
    Rng rng(spec.seed);
    const int K = spec.num_classes;
    const int D = spec.feature_dim;

    auto draw_center = [&] {
        FeatureVector c(static_cast<std::size_t>(D));
        for (double& x : c) {
            x = rng.uniform(-spec.cluster_center_scale, spec.cluster_center_scale);
        }
        return c;
    };
    auto draw_around = [&](const FeatureVector& center) {
        FeatureVector x(center.size());
        for (std::size_t i = 0; i < center.size(); ++i) {
            x[i] = center[i] + rng.normal(0.0, spec.cluster_std);
        }
        return x;
    };

    std::vector<FeatureVector> known_centers;
    known_centers.reserve(static_cast<std::size_t>(K));
    for (int c = 0; c < K; ++c) known_centers.push_back(draw_center());

    const double margin = 3.0 * spec.cluster_std;
    std::vector<FeatureVector> unknown_centers;
    unknown_centers.reserve(static_cast<std::size_t>(spec.num_unknown));
    int consecutive_rejections = 0;
    while (static_cast<int>(unknown_centers.size()) < spec.num_unknown) {
        FeatureVector candidate = draw_center();
        bool too_close = false;
        for (const auto& kc : known_centers) {
            if (euclidean_distance(candidate, kc) < margin) {
                too_close = true;
                break;
            }
        }
        if (too_close) {
            if (++consecutive_rejections >= 10000) {
                throw InfeasibleSpecError(
                    "generate_dataset: could not place an unknown center away from "
                    "the known centers after 10000 consecutive rejections");
            }
            continue;
        }
        consecutive_rejections = 0;
        unknown_centers.push_back(std::move(candidate));
    }

    GeneratedDataset data;
    data.client_train.resize(static_cast<std::size_t>(spec.num_clients));
    for (int client = 0; client < spec.num_clients; ++client) {
        auto& train = data.client_train[static_cast<std::size_t>(client)];
        train.reserve(static_cast<std::size_t>(K * spec.train_per_class_per_client));
        for (int c = 0; c < K; ++c) {
            for (int i = 0; i < spec.train_per_class_per_client; ++i) {
                train.push_back({draw_around(known_centers[static_cast<std::size_t>(c)]), c});
            }
        }
    }
    data.closed_test.reserve(static_cast<std::size_t>(K * spec.test_per_class));
    for (int c = 0; c < K; ++c) {
        for (int i = 0; i < spec.test_per_class; ++i) {
            data.closed_test.push_back({draw_around(known_centers[static_cast<std::size_t>(c)]), c});
        }
    }
    data.open_test.reserve(data.closed_test.size() + unknown_centers.size());
    for (const auto& sample : data.closed_test) {
        data.open_test.push_back({sample.features, sample.label});
    }
    for (const auto& uc : unknown_centers) {
        data.open_test.push_back({draw_around(uc), kUnknownLabel});
    }
    data.known_centers = std::move(known_centers);
    data.unknown_centers = std::move(unknown_centers);
    return data;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const char* ws = " \t\r";
    const auto begin = s.find_first_not_of(ws);
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(ws);
    return s.substr(begin, end - begin + 1);
}

inline double parse_double_field(const std::string& field, int line) {
    const std::string t = trim(field);
    if (t.empty()) throw ParseError("line " + std::to_string(line) + ": empty field", line);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size()) {
        throw ParseError("line " + std::to_string(line) + ": not a number: \"" + t + "\"",
                         line);
    }
    return value;
}

} // namespace detail

// Delimited-text sample format: one row per sample, comma separated, the
// label first (a non-negative integer or the literal token `unknown`)
// followed by the D feature values. D is fixed by the first row.
inline std::vector<OpenSetSample> load_samples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open \"" + path + "\"");
    std::vector<OpenSetSample> samples;
    std::string line;
    int line_no = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) {
            throw ParseError("line " + std::to_string(line_no) + ": blank line", line_no);
        }
        std::vector<std::string> fields;
        std::stringstream row(line);
        std::string field;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() < 2) {
            throw ParseError("line " + std::to_string(line_no) +
                                 ": expected a label and at least one feature",
                             line_no);
        }
        OpenSetSample sample;
        const std::string label = detail::trim(fields[0]);
        if (label == "unknown") {
            sample.label = kUnknownLabel;
        } else {
            int value = 0;
            const auto [ptr, ec] =
                std::from_chars(label.data(), label.data() + label.size(), value);
            if (ec != std::errc() || ptr != label.data() + label.size() || value < 0) {
                throw ParseError("line " + std::to_string(line_no) + ": bad label \"" +
                                     label + "\" (expected an integer >= 0 or `unknown`)",
                                 line_no);
            }
            sample.label = value;
        }
        for (std::size_t i = 1; i < fields.size(); ++i) {
            sample.features.push_back(detail::parse_double_field(fields[i], line_no));
        }
        if (dim == 0) {
            dim = sample.features.size();
        } else if (sample.features.size() != dim) {
            throw ParseError("line " + std::to_string(line_no) + ": got " +
                                 std::to_string(sample.features.size()) +
                                 " features, expected " + std::to_string(dim),
                             line_no);
        }
        samples.push_back(std::move(sample));
    }
    if (samples.empty()) throw ParseError("\"" + path + "\" contains no samples");
    return samples;
}

inline std::string format_sample_row(int label, const FeatureVector& features) {
    std::string row = label == kUnknownLabel ? "unknown" : std::to_string(label);
    char buf[64];
    for (double x : features) {
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
        row += ',';
        row.append(buf, ptr);
    }
    return row;
}

inline void save_samples(const std::string& path, const std::vector<OpenSetSample>& samples) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write \"" + path + "\"");
    for (const auto& s : samples) out << format_sample_row(s.label, s.features) << '\n';
}

inline void save_samples(const std::string& path, const std::vector<LabeledSample>& samples) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write \"" + path + "\"");
    for (const auto& s : samples) out << format_sample_row(s.label, s.features) << '\n';
}

// Drops unknown-labeled rows; the rest become training-style samples.
inline std::vector<LabeledSample> to_labeled(const std::vector<OpenSetSample>& samples) {
    std::vector<LabeledSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.label != kUnknownLabel) out.push_back({s.features, s.label});
    }
    return out;
}

} // namespace fosr
