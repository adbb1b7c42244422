#pragma once

// Dense gradient-vector arithmetic shared by the buffer, the aggregation
// strategies and the simulator. Accumulation order is fixed left-to-right
// everywhere so that runs are bit-reproducible.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedhist {

using GradientVec = std::vector<double>;

inline void require_same_dim(const GradientVec& a, const GradientVec& b, const char* what) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    }
}

inline double dot(const GradientVec& a, const GradientVec& b) {
    require_same_dim(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const GradientVec& a) {
    double s = 0.0;
    for (const double v : a) s += v * v;
    return std::sqrt(s);
}

// Cosine similarity in [-1, 1]. A zero-norm operand carries no directional
// information and yields 0, so converged (zero) gradients never abort
// aggregation.
inline double cosine_similarity(const GradientVec& a, const GradientVec& b) {
    require_same_dim(a, b, "cosine_similarity");
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline GradientVec weighted_sum(const std::vector<GradientVec>& grads,
                                const std::vector<double>& weights) {
    if (grads.empty()) throw std::invalid_argument("weighted_sum: empty input");
    if (grads.size() != weights.size()) {
        throw std::invalid_argument("weighted_sum: " + std::to_string(grads.size()) +
                                    " gradients vs " + std::to_string(weights.size()) +
                                    " weights");
    }
    GradientVec out(grads.front().size(), 0.0);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        require_same_dim(grads[i], out, "weighted_sum");
        const double w = weights[i];
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * grads[i][j];
    }
    return out;
}

struct RescaleResult {
    GradientVec value;
    bool degenerate = false;  // zero vector could not be rescaled to a positive norm
};

// Scales v so that its l2 norm equals target, preserving direction. A zero
// vector has no direction to preserve; it is returned unchanged and flagged.
inline RescaleResult rescale_to_norm(const GradientVec& v, double target) {
    if (target < 0.0) throw std::invalid_argument("rescale_to_norm: target must be >= 0");
    const double norm = l2_norm(v);
    if (norm == 0.0) return {v, target > 0.0};
    const double scale = target / norm;
    GradientVec out(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) out[j] = v[j] * scale;
    return {std::move(out), false};
}

inline bool all_finite(const GradientVec& v) {
    for (const double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace fedhist
