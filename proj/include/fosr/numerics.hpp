#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fosr/error.hpp"

namespace fosr {

// Raw feature input of dimension D.
using FeatureVector = std::vector<double>;
// Final-layer logits, one entry per known class.
using ActivationVector = std::vector<double>;
// Non-negative entries summing to 1.
using ProbabilityVector = std::vector<double>;

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline void require_finite(const std::vector<double>& v, const char* what) {
    if (!all_finite(v)) {
        throw InvalidInputError(std::string(what) + ": non-finite entry");
    }
}

// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax(const std::vector<double>& v) {
    if (v.empty()) throw InvalidInputError("argmax: empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

// Numerically safe softmax: the max is subtracted before exponentiation.
inline ProbabilityVector softmax(const ActivationVector& v) {
    if (v.empty()) throw InvalidInputError("softmax: empty input");
    require_finite(v, "softmax");
    const double m = *std::max_element(v.begin(), v.end());
    ProbabilityVector out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        sum += out[i];
    }
    for (double& p : out) p /= sum;
    return out;
}

enum class DistanceMetric { Euclidean, Cosine, Eucos };

// Divisor applied to the Euclidean term of eucos.
inline constexpr double kDefaultEucosScale = 200.0;

inline std::string to_string(DistanceMetric m) {
    switch (m) {
    case DistanceMetric::Euclidean: return "euclidean";
    case DistanceMetric::Cosine: return "cosine";
    case DistanceMetric::Eucos: return "eucos";
    }
    throw InvalidInputError("to_string: bad DistanceMetric");
}

inline DistanceMetric metric_from_string(const std::string& s) {
    if (s == "euclidean") return DistanceMetric::Euclidean;
    if (s == "cosine") return DistanceMetric::Cosine;
    if (s == "eucos") return DistanceMetric::Eucos;
    throw InvalidInputError("unknown distance metric: \"" + s + "\"");
}

inline double euclidean_distance(const std::vector<double>& a,
                                 const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw InvalidInputError("euclidean_distance: length mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// 1 - cos(a, b). Zero vectors have no direction and are rejected.
inline double cosine_distance(const std::vector<double>& a,
                              const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw InvalidInputError("cosine_distance: length mismatch");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw InvalidInputError("cosine_distance: zero vector");
    }
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

inline double distance(const std::vector<double>& a, const std::vector<double>& b,
                       DistanceMetric metric,
                       double eucos_scale = kDefaultEucosScale) {
    require_finite(a, "distance");
    require_finite(b, "distance");
    switch (metric) {
    case DistanceMetric::Euclidean: return euclidean_distance(a, b);
    case DistanceMetric::Cosine: return cosine_distance(a, b);
    case DistanceMetric::Eucos:
        return euclidean_distance(a, b) / eucos_scale + cosine_distance(a, b);
    }
    throw InvalidInputError("distance: bad DistanceMetric");
}

} // namespace fosr
