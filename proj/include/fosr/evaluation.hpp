#pragma once

#include <cstdint>
#include <vector>

#include "fosr/classifier.hpp"
#include "fosr/error.hpp"
#include "fosr/openmax.hpp"

namespace fosr {

// (K+1) x (K+1) count grid over the open-set label space. Row = true class,
// column = predicted class; index 0 is the unknown class, known class c maps
// to index c+1.
struct ConfusionMatrix {
    int num_known = 0;
    std::vector<std::vector<std::int64_t>> counts;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int known_classes)
        : num_known(known_classes),
          counts(static_cast<std::size_t>(known_classes + 1),
                 std::vector<std::int64_t>(static_cast<std::size_t>(known_classes + 1), 0)) {}

    static std::size_t index_of(int label) {
        return label == kUnknownLabel ? 0 : static_cast<std::size_t>(label) + 1;
    }

    void add(int true_label, int predicted_label) {
        counts.at(index_of(true_label)).at(index_of(predicted_label)) += 1;
    }

    std::int64_t total() const {
        std::int64_t n = 0;
        for (const auto& row : counts) {
            for (std::int64_t c : row) n += c;
        }
        return n;
    }

    bool operator==(const ConfusionMatrix&) const = default;
};

struct MetricsReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> precision; // length K+1, index 0 = unknown
    std::vector<double> recall;
    std::vector<double> f1;
    ConfusionMatrix counts;
};

// Per-class precision/recall/F1 with 0/0 terms defined as 0, plus the
// unweighted F1 mean over the classes that appear at all (a class absent
// from both the rows and the columns is left out of the mean).
inline MetricsReport compute_metrics(const ConfusionMatrix& cm) {
    const std::size_t n = cm.counts.size();
    if (n == 0 || cm.total() == 0) {
        throw InvalidInputError("compute_metrics: empty confusion matrix");
    }
    MetricsReport report;
    report.counts = cm;
    report.precision.assign(n, 0.0);
    report.recall.assign(n, 0.0);
    report.f1.assign(n, 0.0);

    std::int64_t diagonal = 0;
    double f1_sum = 0.0;
    std::size_t active = 0;
    for (std::size_t c = 0; c < n; ++c) {
        std::int64_t tp = cm.counts[c][c];
        std::int64_t row = 0, col = 0;
        for (std::size_t i = 0; i < n; ++i) {
            row += cm.counts[c][i];
            col += cm.counts[i][c];
        }
        diagonal += tp;
        const double p = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
        const double r = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
        const double f = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        report.precision[c] = p;
        report.recall[c] = r;
        report.f1[c] = f;
        if (row > 0 || col > 0) {
            f1_sum += f;
            ++active;
        }
    }
    report.accuracy = static_cast<double>(diagonal) / static_cast<double>(cm.total());
    report.macro_f1 = active > 0 ? f1_sum / static_cast<double>(active) : 0.0;
    return report;
}

inline double macro_f1(const ConfusionMatrix& cm) { return compute_metrics(cm).macro_f1; }

// Open-set scoring of predictions against ground-truth labels
// (kUnknownLabel marks a true unknown).
inline MetricsReport evaluate_open_set(const std::vector<Prediction>& predictions,
                                       const std::vector<int>& truths, int num_known) {
    if (predictions.size() != truths.size()) {
        throw InvalidInputError("evaluate_open_set: prediction/truth length mismatch");
    }
    if (predictions.empty()) throw InvalidInputError("evaluate_open_set: no samples");
    ConfusionMatrix cm(num_known);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        cm.add(truths[i], predictions[i].label);
    }
    return compute_metrics(cm);
}

// Closed-set scoring with the plain argmax rule; the unknown row and column
// stay empty.
inline MetricsReport evaluate_closed_set(const ModelParameters& m,
                                         const std::vector<LabeledSample>& data) {
    if (data.empty()) throw InvalidInputError("evaluate_closed_set: empty data");
    ConfusionMatrix cm(static_cast<int>(m.output_dim()));
    for (const auto& sample : data) {
        const auto acts = forward_activations(m, sample.features);
        cm.add(sample.label, static_cast<int>(argmax(acts)));
    }
    return compute_metrics(cm);
}

} // namespace fosr
