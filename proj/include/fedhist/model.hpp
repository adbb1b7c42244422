#pragma once

// Small dense classifier for desk-scale experiments: logistic
// regression (hidden_dim == 0) or a one-hidden-layer ReLU MLP, trained with
// softmax cross-entropy. Parameters live in one flat vector so the rest of
// the system can treat model updates as plain gradient vectors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fedhist/data.hpp"
#include "fedhist/gradmath.hpp"
#include "fedhist/rng.hpp"

namespace fedhist {

struct ModelArch {
    int input_dim = 0;
    int hidden_dim = 0;  // 0 selects plain logistic regression
    int class_count = 0;

    bool logistic() const { return hidden_dim == 0; }

    int param_count() const {
        if (logistic()) return class_count * (input_dim + 1);
        return hidden_dim * (input_dim + 1) + class_count * (hidden_dim + 1);
    }

    void validate() const {
        if (input_dim < 1) throw std::invalid_argument("ModelArch: input_dim must be >= 1");
        if (hidden_dim < 0) throw std::invalid_argument("ModelArch: hidden_dim must be >= 0");
        if (class_count < 2) throw std::invalid_argument("ModelArch: class_count must be >= 2");
    }

    bool operator==(const ModelArch&) const = default;
};

// Flat layout: [W1 (hidden x input, row-major), b1, W2 (class x hidden), b2],
// or [W (class x input), b] for logistic regression.
struct ModelParams {
    ModelArch arch;
    GradientVec values;
};

struct Batch {
    int dim = 0;
    std::vector<double> features;  // rows x dim, row-major
    std::vector<int> labels;

    int rows() const { return static_cast<int>(labels.size()); }

    const double* row(int i) const {
        return features.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim);
    }
};

inline Batch full_batch(const Dataset& data) {
    Batch b;
    b.dim = data.dim;
    b.features = data.features;
    b.labels = data.labels;
    return b;
}

// Uniform init in [-0.05, 0.05].
inline ModelParams init_params(const ModelArch& arch, RandomStream& rng) {
    arch.validate();
    ModelParams p;
    p.arch = arch;
    p.values.resize(static_cast<std::size_t>(arch.param_count()));
    for (auto& v : p.values) v = rng.uniform(-0.05, 0.05);
    return p;
}

namespace detail {

struct ParamView {
    const double* w1;
    const double* b1;
    const double* w2;
    const double* b2;
};

inline ParamView view(const ModelParams& p) {
    const auto& a = p.arch;
    const double* base = p.values.data();
    if (a.logistic()) {
        return {nullptr, nullptr, base, base + static_cast<std::size_t>(a.class_count) * a.input_dim};
    }
    const double* w1 = base;
    const double* b1 = w1 + static_cast<std::size_t>(a.hidden_dim) * a.input_dim;
    const double* w2 = b1 + a.hidden_dim;
    const double* b2 = w2 + static_cast<std::size_t>(a.class_count) * a.hidden_dim;
    return {w1, b1, w2, b2};
}

inline void check_batch(const ModelParams& p, const Batch& b) {
    if (b.rows() < 1) throw std::invalid_argument("model: batch is empty");
    if (b.dim != p.arch.input_dim) {
        throw std::invalid_argument("model: batch dim " + std::to_string(b.dim) +
                                    " does not match input_dim " + std::to_string(p.arch.input_dim));
    }
    if (p.values.size() != static_cast<std::size_t>(p.arch.param_count())) {
        throw std::invalid_argument("model: parameter vector length does not match arch");
    }
    for (const int y : b.labels) {
        if (y < 0 || y >= p.arch.class_count) {
            throw std::invalid_argument("model: label " + std::to_string(y) + " out of range");
        }
    }
}

// Fills logits for one input row; hidden/pre-activation scratch is reused.
inline void forward_row(const ModelParams& p, const ParamView& v, const double* x,
                        std::vector<double>& z1, std::vector<double>& logits) {
    const auto& a = p.arch;
    if (a.logistic()) {
        for (int c = 0; c < a.class_count; ++c) {
            double z = v.b2[c];
            const double* w = v.w2 + static_cast<std::size_t>(c) * a.input_dim;
            for (int j = 0; j < a.input_dim; ++j) z += w[j] * x[j];
            logits[static_cast<std::size_t>(c)] = z;
        }
        return;
    }
    for (int h = 0; h < a.hidden_dim; ++h) {
        double z = v.b1[h];
        const double* w = v.w1 + static_cast<std::size_t>(h) * a.input_dim;
        for (int j = 0; j < a.input_dim; ++j) z += w[j] * x[j];
        z1[static_cast<std::size_t>(h)] = z;
    }
    for (int c = 0; c < a.class_count; ++c) {
        double z = v.b2[c];
        const double* w = v.w2 + static_cast<std::size_t>(c) * a.hidden_dim;
        for (int h = 0; h < a.hidden_dim; ++h) {
            z += w[h] * std::max(z1[static_cast<std::size_t>(h)], 0.0);
        }
        logits[static_cast<std::size_t>(c)] = z;
    }
}

// log(sum(exp(z))) with the usual max shift.
inline double log_sum_exp(const std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (const double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

}  // namespace detail

// Mean softmax cross-entropy over the batch.
inline double loss(const ModelParams& params, const Batch& batch) {
    detail::check_batch(params, batch);
    const auto v = detail::view(params);
    std::vector<double> z1(static_cast<std::size_t>(std::max(params.arch.hidden_dim, 1)));
    std::vector<double> logits(static_cast<std::size_t>(params.arch.class_count));
    double total = 0.0;
    for (int i = 0; i < batch.rows(); ++i) {
        detail::forward_row(params, v, batch.row(i), z1, logits);
        total += detail::log_sum_exp(logits) - logits[static_cast<std::size_t>(batch.labels[static_cast<std::size_t>(i)])];
    }
    return total / batch.rows();
}

// Analytic gradient of loss() with respect to the flat parameter vector.
inline GradientVec gradient(const ModelParams& params, const Batch& batch) {
    detail::check_batch(params, batch);
    const auto& a = params.arch;
    const auto v = detail::view(params);
    GradientVec g(params.values.size(), 0.0);
    double* gbase = g.data();
    double* gw1 = nullptr;
    double* gb1 = nullptr;
    double* gw2 = nullptr;
    double* gb2 = nullptr;
    if (a.logistic()) {
        gw2 = gbase;
        gb2 = gw2 + static_cast<std::size_t>(a.class_count) * a.input_dim;
    } else {
        gw1 = gbase;
        gb1 = gw1 + static_cast<std::size_t>(a.hidden_dim) * a.input_dim;
        gw2 = gb1 + a.hidden_dim;
        gb2 = gw2 + static_cast<std::size_t>(a.class_count) * a.hidden_dim;
    }

    std::vector<double> z1(static_cast<std::size_t>(std::max(a.hidden_dim, 1)));
    std::vector<double> logits(static_cast<std::size_t>(a.class_count));
    std::vector<double> dz2(static_cast<std::size_t>(a.class_count));
    std::vector<double> dz1(static_cast<std::size_t>(std::max(a.hidden_dim, 1)));

    for (int i = 0; i < batch.rows(); ++i) {
        const double* x = batch.row(i);
        const int y = batch.labels[static_cast<std::size_t>(i)];
        detail::forward_row(params, v, x, z1, logits);

        // softmax(z) - onehot(y)
        const double m = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (int c = 0; c < a.class_count; ++c) {
            dz2[static_cast<std::size_t>(c)] = std::exp(logits[static_cast<std::size_t>(c)] - m);
            sum += dz2[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < a.class_count; ++c) {
            dz2[static_cast<std::size_t>(c)] /= sum;
        }
        dz2[static_cast<std::size_t>(y)] -= 1.0;

        if (a.logistic()) {
            for (int c = 0; c < a.class_count; ++c) {
                const double d = dz2[static_cast<std::size_t>(c)];
                double* gw = gw2 + static_cast<std::size_t>(c) * a.input_dim;
                for (int j = 0; j < a.input_dim; ++j) gw[j] += d * x[j];
                gb2[c] += d;
            }
            continue;
        }

        for (int c = 0; c < a.class_count; ++c) {
            const double d = dz2[static_cast<std::size_t>(c)];
            double* gw = gw2 + static_cast<std::size_t>(c) * a.hidden_dim;
            for (int h = 0; h < a.hidden_dim; ++h) {
                gw[h] += d * std::max(z1[static_cast<std::size_t>(h)], 0.0);
            }
            gb2[c] += d;
        }
        for (int h = 0; h < a.hidden_dim; ++h) {
            double back = 0.0;
            for (int c = 0; c < a.class_count; ++c) {
                back += v.w2[static_cast<std::size_t>(c) * a.hidden_dim + h] * dz2[static_cast<std::size_t>(c)];
            }
            dz1[static_cast<std::size_t>(h)] = z1[static_cast<std::size_t>(h)] > 0.0 ? back : 0.0;
        }
        for (int h = 0; h < a.hidden_dim; ++h) {
            const double d = dz1[static_cast<std::size_t>(h)];
            if (d == 0.0) continue;
            double* gw = gw1 + static_cast<std::size_t>(h) * a.input_dim;
            for (int j = 0; j < a.input_dim; ++j) gw[j] += d * x[j];
            gb1[h] += d;
        }
    }

    const double inv = 1.0 / batch.rows();
    for (auto& x : g) x *= inv;
    return g;
}

// Runs `steps` mini-batch SGD steps from `start` and returns the effective
// gradient (start - final) / lr, which makes the single full-batch step case
// coincide with gradient() and lets the server treat multi-step local work as
// one update vector. A step whose batch_size reaches the shard size uses the
// whole shard in index order; smaller batches are drawn without replacement.
inline GradientVec local_train(const ModelParams& start, const Dataset& data, double lr,
                               int steps, int batch_size, RandomStream& rng) {
    if (data.size() == 0) throw std::invalid_argument("local_train: dataset is empty");
    if (!(lr > 0.0)) throw std::invalid_argument("local_train: lr must be > 0");
    if (steps < 1) throw std::invalid_argument("local_train: steps must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("local_train: batch_size must be >= 1");

    ModelParams current = start;
    Batch batch;
    batch.dim = data.dim;
    const int n = data.size();
    for (int s = 0; s < steps; ++s) {
        std::vector<int> indices;
        if (batch_size >= n) {
            indices.resize(static_cast<std::size_t>(n));
            std::iota(indices.begin(), indices.end(), 0);
        } else {
            indices = rng.sample_indices(n, batch_size);
        }
        batch.features.clear();
        batch.labels.clear();
        for (const int i : indices) {
            batch.features.insert(batch.features.end(), data.row(i), data.row(i) + data.dim);
            batch.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
        }
        const GradientVec g = gradient(current, batch);
        for (std::size_t j = 0; j < current.values.size(); ++j) current.values[j] -= lr * g[j];
    }

    GradientVec effective(start.values.size());
    for (std::size_t j = 0; j < effective.size(); ++j) {
        effective[j] = (start.values[j] - current.values[j]) / lr;
    }
    return effective;
}

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<int> class_correct;
    std::vector<int> class_total;

    std::vector<double> per_class_accuracy() const {
        std::vector<double> out(class_total.size(), 0.0);
        for (std::size_t c = 0; c < class_total.size(); ++c) {
            out[c] = class_total[c] > 0
                         ? static_cast<double>(class_correct[c]) / class_total[c]
                         : 0.0;
        }
        return out;
    }
};

// Loss, top-1 accuracy and per-class hit counts over a batch. Argmax ties
// resolve to the lowest class index.
inline EvalResult evaluate(const ModelParams& params, const Batch& batch) {
    detail::check_batch(params, batch);
    const auto v = detail::view(params);
    std::vector<double> z1(static_cast<std::size_t>(std::max(params.arch.hidden_dim, 1)));
    std::vector<double> logits(static_cast<std::size_t>(params.arch.class_count));
    EvalResult out;
    out.class_correct.assign(static_cast<std::size_t>(params.arch.class_count), 0);
    out.class_total.assign(static_cast<std::size_t>(params.arch.class_count), 0);
    double total_loss = 0.0;
    int correct = 0;
    for (int i = 0; i < batch.rows(); ++i) {
        const int y = batch.labels[static_cast<std::size_t>(i)];
        detail::forward_row(params, v, batch.row(i), z1, logits);
        total_loss += detail::log_sum_exp(logits) - logits[static_cast<std::size_t>(y)];
        int best = 0;
        for (int c = 1; c < params.arch.class_count; ++c) {
            if (logits[static_cast<std::size_t>(c)] > logits[static_cast<std::size_t>(best)]) best = c;
        }
        out.class_total[static_cast<std::size_t>(y)] += 1;
        if (best == y) {
            ++correct;
            out.class_correct[static_cast<std::size_t>(y)] += 1;
        }
    }
    out.loss = total_loss / batch.rows();
    out.accuracy = static_cast<double>(correct) / batch.rows();
    return out;
}

}  // namespace fedhist
