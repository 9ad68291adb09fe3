#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fosr/error.hpp"

namespace fosr {

// Two-parameter Weibull distribution fitted to the largest tail of a
// distance sample. tail_size_used is the number of values the MLE actually
// consumed (top-eta selection minus dropped zeros).
struct WeibullModel {
    double shape_k = 0.0;
    double scale_lambda = 0.0;
    int tail_size_used = 0;
    bool operator==(const WeibullModel&) const = default;
};

// P(distance <= d): 0 for d <= 0, else 1 - exp(-(d/lambda)^k).
inline double weibull_cdf(const WeibullModel& w, double d) {
    if (d <= 0.0) return 0.0;
    return -std::expm1(-std::pow(d / w.scale_lambda, w.shape_k));
}

// Sum over data of ln k - k ln lambda + (k-1) ln d - (d/lambda)^k.
inline double weibull_log_likelihood(const WeibullModel& w,
                                     const std::vector<double>& data) {
    if (data.empty()) throw InvalidInputError("weibull_log_likelihood: empty data");
    const double log_k = std::log(w.shape_k);
    const double log_lambda = std::log(w.scale_lambda);
    double total = 0.0;
    for (double d : data) {
        if (!(d > 0.0) || !std::isfinite(d)) {
            throw InvalidInputError("weibull_log_likelihood: datum must be positive");
        }
        total += log_k - w.shape_k * log_lambda + (w.shape_k - 1.0) * std::log(d) -
                 std::pow(d / w.scale_lambda, w.shape_k);
    }
    return total;
}

namespace detail {

// MLE profile equation in the shape parameter k:
//   g(k) = sum(d^k ln d) / sum(d^k) - 1/k - mean(ln d)
// g is strictly increasing; its unique root is the MLE shape.
struct WeibullProfile {
    const std::vector<double>& d;
    const std::vector<double>& log_d;
    double mean_log;

    void sums(double k, double& s0, double& s1, double& s2) const {
        s0 = s1 = s2 = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double p = std::pow(d[i], k);
            s0 += p;
            s1 += p * log_d[i];
            s2 += p * log_d[i] * log_d[i];
        }
    }

    double g(double k) const {
        double s0, s1, s2;
        sums(k, s0, s1, s2);
        return s1 / s0 - 1.0 / k - mean_log;
    }

    double g_prime(double k) const {
        double s0, s1, s2;
        sums(k, s0, s1, s2);
        return (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (k * k);
    }
};

} // namespace detail

// Fits a Weibull by maximum likelihood to the eta largest distances.
// Zero distances in the selected tail are dropped; if eta exceeds the number
// of available distances all of them are used. The solver brackets the shape
// root on [1e-3, 1e3] by bisection and polishes it with Newton steps until
// |g(k)| < 1e-10 or 200 iterations total.
inline WeibullModel fit_weibull_tail(const std::vector<double>& distances, int eta) {
    if (eta < 2) throw InvalidInputError("fit_weibull_tail: eta must be >= 2");
    for (double d : distances) {
        if (!std::isfinite(d) || d < 0.0) {
            throw InvalidInputError("fit_weibull_tail: distances must be finite and >= 0");
        }
    }
    std::vector<double> tail = distances;
    std::sort(tail.begin(), tail.end(), std::greater<double>());
    if (tail.size() > static_cast<std::size_t>(eta)) {
        tail.resize(static_cast<std::size_t>(eta));
    }
    while (!tail.empty() && tail.back() <= 0.0) tail.pop_back();
    if (tail.size() < 2) {
        throw InsufficientDataError(
            "fit_weibull_tail: fewer than 2 positive values in the tail");
    }
    if (tail.front() == tail.back()) {
        throw DegenerateDataError("fit_weibull_tail: tail has zero variance");
    }

    // Work on d / max(d): numerically safe for large k since every value is
    // <= 1, and the MLE is scale-equivariant so lambda rescales afterwards.
    const double scale = tail.front();
    std::vector<double> norm(tail.size());
    std::vector<double> log_norm(tail.size());
    double mean_log = 0.0;
    for (std::size_t i = 0; i < tail.size(); ++i) {
        norm[i] = tail[i] / scale;
        log_norm[i] = std::log(norm[i]);
        mean_log += log_norm[i];
    }
    mean_log /= static_cast<double>(norm.size());
    detail::WeibullProfile profile{norm, log_norm, mean_log};

    constexpr double kTol = 1e-10;
    constexpr int kMaxIter = 200;
    double lo = 1e-3, hi = 1e3;
    if (profile.g(hi) < 0.0 || profile.g(lo) > 0.0) {
        throw DegenerateDataError("fit_weibull_tail: shape root outside [1e-3, 1e3]");
    }
    int iter = 0;
    double k = 0.5 * (lo + hi);
    // Bisection until the bracket is small, then Newton inside it.
    for (; iter < kMaxIter / 2; ++iter) {
        k = 0.5 * (lo + hi);
        const double gk = profile.g(k);
        if (std::abs(gk) < kTol) break;
        if (gk < 0.0) {
            lo = k;
        } else {
            hi = k;
        }
    }
    for (; iter < kMaxIter; ++iter) {
        const double gk = profile.g(k);
        if (std::abs(gk) < kTol) break;
        const double step = gk / profile.g_prime(k);
        double next = k - step;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (profile.g(next) < 0.0) {
            lo = next;
        } else {
            hi = next;
        }
        k = next;
    }

    double mean_pow = 0.0;
    for (double e : norm) mean_pow += std::pow(e, k);
    mean_pow /= static_cast<double>(norm.size());
    const double lambda = scale * std::pow(mean_pow, 1.0 / k);

    WeibullModel w;
    w.shape_k = k;
    w.scale_lambda = lambda;
    w.tail_size_used = static_cast<int>(norm.size());
    return w;
}

} // namespace fosr
