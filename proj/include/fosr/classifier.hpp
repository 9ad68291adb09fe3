#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "fosr/error.hpp"
#include "fosr/numerics.hpp"
#include "fosr/random.hpp"

namespace fosr {

struct LayerShape {
    std::size_t rows = 0; // output dimension
    std::size_t cols = 0; // input dimension
    bool operator==(const LayerShape&) const = default;
};

// A feed-forward classifier flattened into one value vector. Layout:
// all weight matrices in layer order, each row-major, followed by all bias
// vectors in the same layer order; bias l has length shapes[l].rows.
// Hidden layers use ReLU, the last layer is affine (raw logits).
struct ModelParameters {
    std::vector<LayerShape> shapes;
    std::vector<double> values;

    std::size_t num_layers() const { return shapes.size(); }

    std::size_t weight_count() const {
        std::size_t n = 0;
        for (const auto& s : shapes) n += s.rows * s.cols;
        return n;
    }

    std::size_t bias_count() const {
        std::size_t n = 0;
        for (const auto& s : shapes) n += s.rows;
        return n;
    }

    std::size_t expected_size() const { return weight_count() + bias_count(); }

    std::size_t weight_offset(std::size_t layer) const {
        std::size_t off = 0;
        for (std::size_t l = 0; l < layer; ++l) off += shapes[l].rows * shapes[l].cols;
        return off;
    }

    std::size_t bias_offset(std::size_t layer) const {
        std::size_t off = weight_count();
        for (std::size_t l = 0; l < layer; ++l) off += shapes[l].rows;
        return off;
    }

    std::size_t input_dim() const { return shapes.empty() ? 0 : shapes.front().cols; }
    std::size_t output_dim() const { return shapes.empty() ? 0 : shapes.back().rows; }

    bool operator==(const ModelParameters&) const = default;
};

struct LabeledSample {
    FeatureVector features;
    int label = 0;
};

struct TrainingConfig {
    double learning_rate = 0.05;
    int batch_size = 32;
    int local_epochs = 3;
    std::uint64_t seed = 0;
};

inline void check_model(const ModelParameters& m) {
    if (m.shapes.empty()) throw InvalidInputError("model: no layers");
    if (m.values.size() != m.expected_size()) {
        throw InvalidInputError("model: flat value count does not match shapes");
    }
    for (std::size_t l = 1; l < m.shapes.size(); ++l) {
        if (m.shapes[l].cols != m.shapes[l - 1].rows) {
            throw InvalidInputError("model: inner layer dimensions do not chain");
        }
    }
}

// Xavier-uniform weights on [-s, s] with s = sqrt(6 / (fan_in + fan_out)),
// zero biases. Deterministic for a given seed.
inline ModelParameters init_model(int input_dim, int hidden_dim, int num_classes,
                                  std::uint64_t seed) {
    if (input_dim < 1 || hidden_dim < 1 || num_classes < 1) {
        throw InvalidInputError("init_model: dimensions must be >= 1");
    }
    ModelParameters m;
    m.shapes = {{static_cast<std::size_t>(hidden_dim), static_cast<std::size_t>(input_dim)},
                {static_cast<std::size_t>(num_classes), static_cast<std::size_t>(hidden_dim)}};
    m.values.assign(m.expected_size(), 0.0);
    Rng rng(seed);
    for (std::size_t l = 0; l < m.shapes.size(); ++l) {
        const auto& s = m.shapes[l];
        const double bound = std::sqrt(6.0 / static_cast<double>(s.cols + s.rows));
        double* w = m.values.data() + m.weight_offset(l);
        for (std::size_t i = 0; i < s.rows * s.cols; ++i) {
            w[i] = rng.uniform(-bound, bound);
        }
    }
    return m;
}

namespace detail {

// Activations of every layer for one input: post[0] = x, post[l+1] is the
// output of layer l after ReLU (or the raw logits for the last layer).
struct ForwardTrace {
    std::vector<std::vector<double>> post;
};

inline ForwardTrace forward_trace(const ModelParameters& m, const FeatureVector& x) {
    if (x.size() != m.input_dim()) {
        throw InvalidInputError("forward: feature length does not match model input");
    }
    ForwardTrace t;
    t.post.reserve(m.num_layers() + 1);
    t.post.push_back(x);
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        const auto& s = m.shapes[l];
        const double* w = m.values.data() + m.weight_offset(l);
        const double* b = m.values.data() + m.bias_offset(l);
        const std::vector<double>& in = t.post.back();
        std::vector<double> out(s.rows);
        for (std::size_t r = 0; r < s.rows; ++r) {
            double z = b[r];
            const double* wr = w + r * s.cols;
            for (std::size_t c = 0; c < s.cols; ++c) z += wr[c] * in[c];
            out[r] = z;
        }
        if (l + 1 < m.num_layers()) {
            for (double& z : out) z = z > 0.0 ? z : 0.0;
        }
        t.post.push_back(std::move(out));
    }
    return t;
}

} // namespace detail

inline ActivationVector forward_activations(const ModelParameters& m,
                                            const FeatureVector& x) {
    check_model(m);
    return detail::forward_trace(m, x).post.back();
}

// Mean cross-entropy of softmax(logits) over the batch, computed via
// log-sum-exp.
inline double cross_entropy_loss(const ModelParameters& m,
                                 const std::vector<LabeledSample>& batch) {
    check_model(m);
    if (batch.empty()) throw InvalidInputError("cross_entropy_loss: empty batch");
    double total = 0.0;
    for (const auto& sample : batch) {
        const auto z = detail::forward_trace(m, sample.features).post.back();
        if (sample.label < 0 || static_cast<std::size_t>(sample.label) >= z.size()) {
            throw InvalidInputError("cross_entropy_loss: label out of range");
        }
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double zi : z) sum += std::exp(zi - zmax);
        total += zmax + std::log(sum) - z[static_cast<std::size_t>(sample.label)];
    }
    return total / static_cast<double>(batch.size());
}

// Analytic gradient of cross_entropy_loss w.r.t. every parameter, in the
// same flat layout as ModelParameters::values.
inline std::vector<double> loss_gradient(const ModelParameters& m,
                                         const std::vector<LabeledSample>& batch) {
    check_model(m);
    if (batch.empty()) throw InvalidInputError("loss_gradient: empty batch");
    std::vector<double> grad(m.values.size(), 0.0);
    const std::size_t L = m.num_layers();
    for (const auto& sample : batch) {
        const auto trace = detail::forward_trace(m, sample.features);
        const auto& logits = trace.post.back();
        if (sample.label < 0 || static_cast<std::size_t>(sample.label) >= logits.size()) {
            throw InvalidInputError("loss_gradient: label out of range");
        }
        // dL/dz for the output layer: softmax - onehot
        std::vector<double> delta = softmax(logits);
        delta[static_cast<std::size_t>(sample.label)] -= 1.0;
        for (std::size_t li = L; li-- > 0;) {
            const auto& s = m.shapes[li];
            const std::vector<double>& in = trace.post[li];
            double* gw = grad.data() + m.weight_offset(li);
            double* gb = grad.data() + m.bias_offset(li);
            for (std::size_t r = 0; r < s.rows; ++r) {
                gb[r] += delta[r];
                double* gwr = gw + r * s.cols;
                for (std::size_t c = 0; c < s.cols; ++c) gwr[c] += delta[r] * in[c];
            }
            if (li == 0) break;
            const double* w = m.values.data() + m.weight_offset(li);
            std::vector<double> prev(s.cols, 0.0);
            for (std::size_t r = 0; r < s.rows; ++r) {
                const double* wr = w + r * s.cols;
                for (std::size_t c = 0; c < s.cols; ++c) prev[c] += wr[c] * delta[r];
            }
            // ReLU mask: in == trace.post[li] is the post-activation output
            for (std::size_t c = 0; c < s.cols; ++c) {
                if (in[c] <= 0.0) prev[c] = 0.0;
            }
            delta = std::move(prev);
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& g : grad) g *= inv;
    return grad;
}

// Seeded-shuffle mini-batch SGD. Shuffle order for epoch e comes from
// derive_seed(cfg.seed, e); the loss reduction is the mean over each batch,
// so the step size is independent of batch size. The input model is not
// mutated.
inline ModelParameters train_local(const ModelParameters& m,
                                   const std::vector<LabeledSample>& data,
                                   const TrainingConfig& cfg) {
    check_model(m);
    if (data.empty()) throw InvalidInputError("train_local: empty data");
    if (cfg.learning_rate < 0.0 || cfg.batch_size < 1 || cfg.local_epochs < 1) {
        throw InvalidInputError("train_local: bad training config");
    }
    const std::size_t K = m.output_dim();
    for (const auto& sample : data) {
        if (sample.label < 0 || static_cast<std::size_t>(sample.label) >= K) {
            throw InvalidInputError("train_local: label out of range");
        }
    }
    ModelParameters out = m;
    std::vector<std::size_t> order(data.size());
    std::vector<LabeledSample> batch;
    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(data[order[i]]);
            const auto grad = loss_gradient(out, batch);
            for (std::size_t i = 0; i < out.values.size(); ++i) {
                out.values[i] -= cfg.learning_rate * grad[i];
            }
        }
    }
    return out;
}

// Fraction of samples whose argmax logit equals the label.
inline double evaluate_accuracy(const ModelParameters& m,
                                const std::vector<LabeledSample>& data) {
    check_model(m);
    if (data.empty()) throw InvalidInputError("evaluate_accuracy: empty data");
    std::size_t correct = 0;
    for (const auto& sample : data) {
        const auto z = detail::forward_trace(m, sample.features).post.back();
        if (argmax(z) == static_cast<std::size_t>(sample.label)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

} // namespace fosr
