#pragma once

// Aggregation strategies behind one entry point: the history-aware pipeline
// (collaborative-gradient fusion -> staleness/utility weighting -> l2-norm
// restoration) and the FedAvg / DynSGD / TWAFL baselines.

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedhist/buffer.hpp"
#include "fedhist/gradmath.hpp"

namespace fedhist {

enum class Strategy { fedhist, fedavg, dynsgd, twafl };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::fedhist: return "fedhist";
        case Strategy::fedavg: return "fedavg";
        case Strategy::dynsgd: return "dynsgd";
        case Strategy::twafl: return "twafl";
    }
    return "unknown";
}

inline Strategy parse_strategy(std::string_view name) {
    if (name == "fedhist") return Strategy::fedhist;
    if (name == "fedavg") return Strategy::fedavg;
    if (name == "dynsgd") return Strategy::dynsgd;
    if (name == "twafl") return Strategy::twafl;
    throw std::invalid_argument("unknown strategy '" + std::string(name) +
                                "' (expected fedhist|fedavg|dynsgd|twafl)");
}

struct HistParams {
    double alpha = 0.5;          // collaborative-gradient fusion weight
    double lambda = 1.0;         // utility boost weight
    double gamma = 0.2;          // utility EMA constant
    double sim_threshold = 0.0;  // reward/penalty boundary for hindsight utility
    int history_depth = 5;       // buffer depth h
    double clamp_eps = 1e-6;     // weight floor before normalization

    void validate() const {
        if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
        if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0, 1]");
        if (!(sim_threshold >= -1.0 && sim_threshold <= 1.0)) {
            throw std::invalid_argument("sim_threshold must be in [-1, 1]");
        }
        if (history_depth < 1) throw std::invalid_argument("history_depth must be >= 1");
        if (!(clamp_eps > 0.0)) throw std::invalid_argument("clamp_eps must be > 0");
    }
};

// Per-client running-average utility, updated by EMA once per evaluated round.
class UtilityTable {
public:
    explicit UtilityTable(int client_count)
        : average_(static_cast<std::size_t>(client_count), 0.0),
          last_raw_(static_cast<std::size_t>(client_count), 0.0) {
        if (client_count < 1) throw std::invalid_argument("UtilityTable: client_count must be >= 1");
    }

    int client_count() const { return static_cast<int>(average_.size()); }

    double average(int client) const { return average_.at(static_cast<std::size_t>(client)); }
    double last_raw(int client) const { return last_raw_.at(static_cast<std::size_t>(client)); }
    const std::vector<double>& averages() const { return average_; }

    void record(int client, double util, double gamma);

private:
    std::vector<double> average_;
    std::vector<double> last_raw_;
};

// (e/2)^(-staleness): exponential decay in the number of rounds a gradient
// spent in flight.
inline double staleness_weight(int staleness) {
    if (staleness < 1) throw std::invalid_argument("staleness_weight: staleness must be >= 1");
    return std::pow(2.0 / std::numbers::e, static_cast<double>(staleness));
}

// Fuses a local gradient with its collaborative historical gradient:
// g + alpha * g_co. Without history the gradient passes through unchanged.
inline GradientVec egs_fuse(const GradientVec& g, const std::optional<GradientVec>& collaborative,
                            double alpha) {
    if (!collaborative) return g;
    require_same_dim(g, *collaborative, "egs_fuse");
    GradientVec out(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) out[j] = g[j] + alpha * (*collaborative)[j];
    return out;
}

// EMA step for the running-average utility.
inline double update_avg_utility(double prev, double util, double gamma) {
    return (1.0 - gamma) * prev + gamma * util;
}

inline void UtilityTable::record(int client, double util, double gamma) {
    auto& avg = average_.at(static_cast<std::size_t>(client));
    last_raw_[static_cast<std::size_t>(client)] = util;
    avg = update_avg_utility(avg, util, gamma);
}

// Normalized per-client weights (e/2)^(-tau_i) + lambda * avg_util(i), each
// clamped below at clamp_eps so negative utilities can never flip a weight's
// sign.
inline std::vector<double> haa_weights(const std::vector<GradientRecord>& records,
                                       const UtilityTable& utils, const HistParams& params) {
    if (records.empty()) throw std::invalid_argument("haa_weights: no records");
    std::vector<double> weights(records.size());
    double total = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        double w = staleness_weight(records[i].staleness) +
                   params.lambda * utils.average(records[i].client_id);
        if (w < params.clamp_eps) w = params.clamp_eps;
        weights[i] = w;
        total += w;
    }
    for (auto& w : weights) w /= total;
    return weights;
}

// Mean of the relatively fresh set: the predicted staleness-free global
// gradient. Empty set -> no prediction.
inline std::optional<GradientVec> predicted_unbiased(const std::vector<GradientRecord>& fresh) {
    if (fresh.empty()) return std::nullopt;
    GradientVec sum(fresh.front().grad.size(), 0.0);
    for (const auto& record : fresh) {
        require_same_dim(record.grad, sum, "predicted_unbiased");
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += record.grad[j];
    }
    const double inv = 1.0 / static_cast<double>(fresh.size());
    for (auto& v : sum) v *= inv;
    return sum;
}

// Hindsight utility of one historical record against the predicted gradient.
// Sign follows sim - sim_threshold (reward vs penalty); staler gradients get
// larger rewards / smaller penalties; larger fresh sets mean a more credible
// prediction and scale the score up.
inline double utility(const GradientRecord& g_his, const GradientVec& g_pred, int fresh_count,
                      const HistParams& params) {
    if (fresh_count < 1) throw std::invalid_argument("utility: fresh_count must be >= 1");
    const double sim = cosine_similarity(g_his.grad, g_pred);
    const double decay = staleness_weight(g_his.staleness);
    const double p_his = sim >= params.sim_threshold ? 1.0 - decay : decay;
    return (sim - params.sim_threshold) * p_his * fresh_count;
}

// Rescales the aggregate to the mean l2 norm of the fused local gradients.
inline RescaleResult ina_rescale(const GradientVec& aggregate,
                                 const std::vector<GradientVec>& fused_locals) {
    if (fused_locals.empty()) throw std::invalid_argument("ina_rescale: no local gradients");
    double mean_norm = 0.0;
    for (const auto& g : fused_locals) mean_norm += l2_norm(g);
    mean_norm /= static_cast<double>(fused_locals.size());
    return rescale_to_norm(aggregate, mean_norm);
}

struct AggregateResult {
    GradientVec global;
    std::vector<double> weights;       // sums to 1, all > 0
    bool degenerate_rescale = false;   // zero aggregate could not be rescaled
};

// One round of server aggregation over exactly the K submitted records.
inline AggregateResult aggregate(Strategy strategy, const std::vector<GradientRecord>& records,
                                 const HistoryBuffer& buffer, const UtilityTable& utils,
                                 const HistParams& params) {
    if (records.empty()) throw std::invalid_argument("aggregate: no records");

    const auto normalized = [&](auto&& raw_weight) {
        std::vector<double> weights(records.size());
        double total = 0.0;
        for (std::size_t i = 0; i < records.size(); ++i) {
            weights[i] = raw_weight(records[i]);
            total += weights[i];
        }
        for (auto& w : weights) w /= total;
        return weights;
    };

    if (strategy == Strategy::fedhist) {
        std::vector<GradientVec> fused;
        fused.reserve(records.size());
        for (const auto& record : records) {
            fused.push_back(egs_fuse(record.grad, buffer.select_collaborative(record.grad),
                                     params.alpha));
        }
        auto weights = haa_weights(records, utils, params);
        const GradientVec pre = weighted_sum(fused, weights);
        RescaleResult rescaled = ina_rescale(pre, fused);
        return {std::move(rescaled.value), std::move(weights), rescaled.degenerate};
    }

    // Baselines: normalized weighted sum of the raw gradients, no fusion, no
    // rescale.
    std::vector<double> weights;
    switch (strategy) {
        case Strategy::fedavg:
            weights = normalized([](const GradientRecord& r) {
                return static_cast<double>(r.sample_count);
            });
            break;
        case Strategy::dynsgd:
            weights = normalized([](const GradientRecord& r) {
                if (r.staleness < 1) throw std::invalid_argument("aggregate: staleness must be >= 1");
                return 1.0 / static_cast<double>(r.staleness);
            });
            break;
        case Strategy::twafl:
            weights = normalized([](const GradientRecord& r) {
                return staleness_weight(r.staleness);
            });
            break;
        case Strategy::fedhist:
            break;  // handled above
    }
    GradientVec global(records.front().grad.size(), 0.0);
    for (std::size_t i = 0; i < records.size(); ++i) {
        require_same_dim(records[i].grad, global, "aggregate");
        for (std::size_t j = 0; j < global.size(); ++j) {
            global[j] += weights[i] * records[i].grad[j];
        }
    }
    return {std::move(global), std::move(weights), false};
}

}  // namespace fedhist
