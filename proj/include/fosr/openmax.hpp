#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "fosr/classifier.hpp"
#include "fosr/error.hpp"
#include "fosr/numerics.hpp"
#include "fosr/weibull.hpp"

namespace fosr {

// Label value for "not one of the known classes".
inline constexpr int kUnknownLabel = -1;

struct CalibrationConfig {
    int tail_size_eta = 20;
    int alpha_rank = 10;
    double epsilon_threshold = 0.0;
    DistanceMetric metric = DistanceMetric::Euclidean;
    bool operator==(const CalibrationConfig&) const = default;
};

// Fitted open-set state of one known class.
struct ClassCalibration {
    int class_id = 0;
    ActivationVector mav;
    WeibullModel weibull;
    int distance_count = 0; // size of the pooled distance list the fit saw
    bool operator==(const ClassCalibration&) const = default;
};

// What one client contributes for one class: its local MAV and the
// distances of its correctly classified samples to that MAV. Never any
// per-sample activations or features.
struct ClientClassStats {
    ActivationVector mav;
    std::vector<double> distances;
    bool operator==(const ClientClassStats&) const = default;
};

// Per-client calibration payload. Classes with no correctly classified
// samples are absent from the map.
struct CalibrationUpload {
    int client_id = 0;
    std::map<int, ClientClassStats> classes;
    bool operator==(const CalibrationUpload&) const = default;
};

// Server-side calibration over all K known classes, ready for inference.
struct GlobalCalibration {
    CalibrationConfig config;
    std::vector<ClassCalibration> classes; // index == class_id, size K
    bool operator==(const GlobalCalibration&) const = default;

    int num_classes() const { return static_cast<int>(classes.size()); }
};

struct Prediction {
    int label = kUnknownLabel;         // class id, or kUnknownLabel
    ProbabilityVector probabilities;   // length K+1, index 0 = unknown
    std::vector<double> weights_omega; // the K recalibration weights
};

inline void check_calibration_config(const CalibrationConfig& cfg, int num_classes) {
    if (cfg.tail_size_eta < 2) {
        throw InvalidInputError("calibration: tail_size_eta must be >= 2");
    }
    if (cfg.alpha_rank < 1 || cfg.alpha_rank > num_classes) {
        throw InvalidInputError("calibration: alpha_rank must be in [1, K]");
    }
    if (!(cfg.epsilon_threshold >= 0.0 && cfg.epsilon_threshold <= 1.0)) {
        throw InvalidInputError("calibration: epsilon_threshold must be in [0, 1]");
    }
}

// Activations of the samples the model classifies correctly, grouped by
// their true label. Classes with no correct samples are absent; an empty
// map just means the model got nothing right.
inline std::map<int, std::vector<ActivationVector>>
collect_correct_activations(const ModelParameters& m,
                            const std::vector<LabeledSample>& data) {
    if (data.empty()) throw InvalidInputError("collect_correct_activations: empty data");
    std::map<int, std::vector<ActivationVector>> by_class;
    for (const auto& sample : data) {
        auto acts = forward_activations(m, sample.features);
        if (argmax(acts) == static_cast<std::size_t>(sample.label)) {
            by_class[sample.label].push_back(std::move(acts));
        }
    }
    return by_class;
}

// Element-wise mean activation vector. Accumulates in extended precision so
// the mean of N identical vectors reproduces the vector bit-exactly.
inline ActivationVector compute_mav(const std::vector<ActivationVector>& acts) {
    if (acts.empty()) throw InvalidInputError("compute_mav: empty activation list");
    const std::size_t dim = acts.front().size();
    std::vector<long double> sum(dim, 0.0L);
    for (const auto& a : acts) {
        if (a.size() != dim) throw InvalidInputError("compute_mav: length mismatch");
        for (std::size_t i = 0; i < dim; ++i) sum[i] += a[i];
    }
    ActivationVector mav(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        mav[i] = static_cast<double>(sum[i] / static_cast<long double>(acts.size()));
    }
    return mav;
}

inline std::vector<double> compute_distances(const std::vector<ActivationVector>& acts,
                                             const ActivationVector& mav,
                                             DistanceMetric metric) {
    std::vector<double> out;
    out.reserve(acts.size());
    for (const auto& a : acts) out.push_back(distance(a, mav, metric));
    return out;
}

// Client side of the calibration exchange: activations of correctly
// classified samples -> per-class local MAV -> distances to that local MAV.
inline CalibrationUpload build_client_upload(int client_id, const ModelParameters& m,
                                             const std::vector<LabeledSample>& data,
                                             DistanceMetric metric) {
    CalibrationUpload upload;
    upload.client_id = client_id;
    for (auto& [class_id, acts] : collect_correct_activations(m, data)) {
        ClientClassStats stats;
        stats.mav = compute_mav(acts);
        stats.distances = compute_distances(acts, stats.mav, metric);
        upload.classes.emplace(class_id, std::move(stats));
    }
    return upload;
}

// Whether the server averages client MAVs uniformly or weighted by each
// client's correct-sample count for the class.
enum class MavWeighting { Uniform, BySampleCount };

// Server side: per class, average the reporting clients' MAVs and
// concatenate their distance lists (ascending client id, each client's
// internal order preserved), then fit the Weibull tail on the pool.
// Distances stay relative to each client's local MAV; they are not
// recomputed against the averaged one.
inline GlobalCalibration aggregate_uploads(const std::vector<CalibrationUpload>& uploads,
                                           int num_classes,
                                           const CalibrationConfig& cfg,
                                           MavWeighting weighting = MavWeighting::Uniform) {
    if (uploads.empty()) throw InvalidInputError("aggregate_uploads: no uploads");
    if (num_classes < 1) throw InvalidInputError("aggregate_uploads: K must be >= 1");
    check_calibration_config(cfg, num_classes);

    std::vector<const CalibrationUpload*> ordered;
    ordered.reserve(uploads.size());
    for (const auto& u : uploads) ordered.push_back(&u);
    std::sort(ordered.begin(), ordered.end(),
              [](const CalibrationUpload* a, const CalibrationUpload* b) {
                  return a->client_id < b->client_id;
              });

    GlobalCalibration cal;
    cal.config = cfg;
    cal.classes.resize(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) {
        std::vector<long double> mav_sum;
        long double weight_sum = 0.0L;
        std::vector<double> pool;
        for (const CalibrationUpload* u : ordered) {
            auto it = u->classes.find(c);
            if (it == u->classes.end()) continue;
            const ClientClassStats& stats = it->second;
            const long double w = weighting == MavWeighting::Uniform
                                      ? 1.0L
                                      : static_cast<long double>(stats.distances.size());
            if (mav_sum.empty()) mav_sum.assign(stats.mav.size(), 0.0L);
            if (stats.mav.size() != mav_sum.size()) {
                throw ProtocolError("aggregate_uploads: MAV length mismatch for class " +
                                    std::to_string(c));
            }
            for (std::size_t i = 0; i < mav_sum.size(); ++i) {
                mav_sum[i] += w * static_cast<long double>(stats.mav[i]);
            }
            weight_sum += w;
            pool.insert(pool.end(), stats.distances.begin(), stats.distances.end());
        }
        if (weight_sum == 0.0L) {
            throw MissingClassError(c, "aggregate_uploads: class " + std::to_string(c) +
                                           " reported by no client");
        }
        ClassCalibration& entry = cal.classes[static_cast<std::size_t>(c)];
        entry.class_id = c;
        entry.mav.resize(mav_sum.size());
        for (std::size_t i = 0; i < mav_sum.size(); ++i) {
            entry.mav[i] = static_cast<double>(mav_sum[i] / weight_sum);
        }
        entry.distance_count = static_cast<int>(pool.size());
        try {
            entry.weibull = fit_weibull_tail(pool, cfg.tail_size_eta);
        } catch (const InsufficientDataError& e) {
            throw InsufficientDataError("class " + std::to_string(c) + ": " + e.what());
        } catch (const DegenerateDataError& e) {
            throw DegenerateDataError("class " + std::to_string(c) + ": " + e.what());
        }
    }
    return cal;
}

struct Recalibration {
    ActivationVector revised;      // length K
    double unknown_activation = 0.0;
    std::vector<double> weights_omega; // length K
};

// OpenMax activation revision. Classes are ranked by activation
// (descending, ties to the lower class id); the alpha top-ranked classes
// get weight
//   omega = 1 - ((alpha - j + 1) / alpha) * cdf(weibull, dist(v, mav))
// at rank j = 1..alpha, every other class keeps omega = 1. The distance is
// between the full activation vector and the class MAV. The unknown class
// receives activation sum(v_i * (1 - omega_i)).
inline Recalibration recalibrate(const ActivationVector& v, const GlobalCalibration& cal) {
    const int K = cal.num_classes();
    if (static_cast<int>(v.size()) != K) {
        throw InvalidInputError("recalibrate: activation length does not match calibration");
    }
    require_finite(v, "recalibrate");
    check_calibration_config(cal.config, K);

    std::vector<int> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&v](int a, int b) { return v[a] > v[b]; });

    Recalibration rec;
    rec.weights_omega.assign(v.size(), 1.0);
    const int alpha = cal.config.alpha_rank;
    for (int j = 1; j <= alpha; ++j) {
        const int c = order[static_cast<std::size_t>(j - 1)];
        const ClassCalibration& entry = cal.classes[static_cast<std::size_t>(c)];
        const double d = distance(v, entry.mav, cal.config.metric);
        const double rank_weight = static_cast<double>(alpha - j + 1) / alpha;
        rec.weights_omega[static_cast<std::size_t>(c)] =
            1.0 - rank_weight * weibull_cdf(entry.weibull, d);
    }
    rec.revised.resize(v.size());
    rec.unknown_activation = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        rec.revised[i] = v[i] * rec.weights_omega[i];
        rec.unknown_activation += v[i] * (1.0 - rec.weights_omega[i]);
    }
    return rec;
}

// Open-set decision rule: softmax over [unknown_activation, revised...];
// the sample is unknown when the unknown entry wins the argmax or when the
// best known-class probability falls below epsilon.
inline Prediction predict_open(const FeatureVector& x, const ModelParameters& m,
                               const GlobalCalibration& cal) {
    const ActivationVector v = forward_activations(m, x);
    Recalibration rec = recalibrate(v, cal);

    ActivationVector augmented;
    augmented.reserve(v.size() + 1);
    augmented.push_back(rec.unknown_activation);
    augmented.insert(augmented.end(), rec.revised.begin(), rec.revised.end());

    Prediction pred;
    pred.probabilities = softmax(augmented);
    pred.weights_omega = std::move(rec.weights_omega);
    const std::size_t best = argmax(pred.probabilities);
    const double best_known =
        *std::max_element(pred.probabilities.begin() + 1, pred.probabilities.end());
    if (best == 0 || best_known < cal.config.epsilon_threshold) {
        pred.label = kUnknownLabel;
    } else {
        pred.label = static_cast<int>(best) - 1;
    }
    return pred;
}

} // namespace fosr
