#pragma once

// Deterministic K-async federated training loop: N simulated clients with
// fixed per-client job durations, server-side rounds driven by the K earliest
// completions, staleness accounting, history maintenance and metric capture.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "fedhist/buffer.hpp"
#include "fedhist/config.hpp"
#include "fedhist/data.hpp"
#include "fedhist/gradmath.hpp"
#include "fedhist/model.hpp"
#include "fedhist/rng.hpp"
#include "fedhist/strategies.hpp"

namespace fedhist {

struct ClientState {
    int client_id = 0;
    double duration = 1.0;     // simulated time per local job
    ModelParams model;         // last received global model (the job's base)
    int base_round = 0;        // round that model came from; 0 = initial
    double finish_time = 0.0;  // completion time of the in-flight job
    long long job_index = 0;   // in-flight job counter, seeds the job RNG
    double lr = 0.0;
    long long participations = 0;
    long long staleness_sum = 0;
    int staleness_max = 0;
};

struct RoundRecord {
    int round = 0;
    double sim_time = 0.0;
    std::vector<int> participants;  // ascending client_id
    std::vector<int> staleness;     // aligned with participants
    std::vector<double> weights;    // aligned with participants
    double global_grad_norm = 0.0;
    double pred_act_deviation = std::numeric_limits<double>::quiet_NaN();
    double test_accuracy = 0.0;
    double test_loss = 0.0;
};

struct ClientSummary {
    int client_id = 0;
    int sample_count = 0;
    double duration = 0.0;
    long long participations = 0;
    double mean_staleness = std::numeric_limits<double>::quiet_NaN();
    int max_staleness = 0;
    double final_avg_utility = 0.0;
};

struct ExperimentResult {
    std::vector<RoundRecord> rounds;
    std::vector<ClientSummary> clients;
    std::vector<double> final_per_class_accuracy;
    double final_accuracy = 0.0;
    double best_accuracy = 0.0;
    double final_loss = 0.0;
    double mean_staleness = 0.0;
    int max_staleness = 0;
};

struct StalenessStats {
    double mean = 0.0;
    int max = 0;
    std::map<int, double> per_client_mean;
    std::map<int, int> per_client_max;
};

inline StalenessStats staleness_stats(const std::vector<RoundRecord>& records) {
    if (records.empty()) throw std::invalid_argument("staleness_stats: no rounds");
    StalenessStats out;
    long long total = 0, count = 0;
    std::map<int, std::pair<long long, long long>> acc;  // client -> (sum, n)
    for (const auto& r : records) {
        for (std::size_t i = 0; i < r.participants.size(); ++i) {
            const int c = r.participants[i];
            const int tau = r.staleness[i];
            total += tau;
            ++count;
            out.max = std::max(out.max, tau);
            auto& a = acc[c];
            a.first += tau;
            a.second += 1;
            auto [it, inserted] = out.per_client_max.try_emplace(c, tau);
            if (!inserted) it->second = std::max(it->second, tau);
        }
    }
    if (count == 0) throw std::invalid_argument("staleness_stats: no submissions");
    out.mean = static_cast<double>(total) / static_cast<double>(count);
    for (const auto& [c, a] : acc) {
        out.per_client_mean[c] = static_cast<double>(a.first) / static_cast<double>(a.second);
    }
    return out;
}

// First round whose test accuracy reaches `target`, if any.
inline std::optional<int> rounds_to_accuracy(const std::vector<RoundRecord>& records,
                                             double target) {
    if (!(target > 0.0) || !(target < 1.0))
        throw std::invalid_argument("rounds_to_accuracy: target must be in (0, 1)");
    for (const auto& r : records)
        if (r.test_accuracy >= target) return r.round;
    return std::nullopt;
}

namespace detail {

inline double client_duration(const ExperimentConfig& cfg, int client_id) {
    RandomStream rng(derive_seed(cfg.seed, StreamTag::speed, static_cast<std::uint64_t>(client_id)));
    double duration = cfg.speed_value;
    if (cfg.speed_model == "uniform") {
        duration = rng.uniform(cfg.speed_min, cfg.speed_max);
    } else if (cfg.speed_model == "bimodal") {
        duration = rng.uniform() < cfg.slow_fraction ? cfg.speed_slow : cfg.speed_fast;
    }
    if (cfg.isolate_class >= 0) {
        for (const int c : cfg.isolate_clients) {
            if (c == client_id) {
                duration *= cfg.isolate_speed_factor;
                break;
            }
        }
    }
    return duration;
}

// Runs the selected clients' local jobs, writing each gradient into its slot.
// Every job owns an RNG derived from (seed, client, job index), so the result
// is identical for any worker count.
inline void run_local_jobs(const ExperimentConfig& cfg, const std::vector<ClientState>& states,
                           const std::vector<Dataset>& shards, const std::vector<int>& selected,
                           std::vector<GradientVec>& grads) {
    grads.assign(selected.size(), {});
    auto run_one = [&](std::size_t i) {
        const ClientState& st = states[static_cast<std::size_t>(selected[i])];
        RandomStream rng(derive_seed(cfg.seed, StreamTag::local_job,
                                     static_cast<std::uint64_t>(st.client_id),
                                     static_cast<std::uint64_t>(st.job_index)));
        grads[i] = local_train(st.model, shards[static_cast<std::size_t>(st.client_id)], st.lr,
                               cfg.local_steps, cfg.batch_size, rng);
    };
    const std::size_t n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), selected.size());
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < selected.size(); ++i) run_one(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < selected.size(); i += n_threads) run_one(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();

    TrainTestSplit split = cfg.dataset == "csv"
                               ? split_train_test(load_csv(cfg.csv_path), cfg.seed)
                               : generate_synthetic(cfg.classes, cfg.dim, cfg.per_class,
                                                    cfg.spread, cfg.seed);
    const std::vector<Dataset> shards = dirichlet_partition(split.train, cfg.partition_spec());
    const Batch test = full_batch(split.test);

    const ModelArch arch{split.train.dim, cfg.hidden_dim, split.train.class_count};
    RandomStream init_rng(derive_seed(cfg.seed, StreamTag::init));
    ModelParams global = init_params(arch, init_rng);

    std::vector<ClientState> states(static_cast<std::size_t>(cfg.n_clients));
    for (int c = 0; c < cfg.n_clients; ++c) {
        ClientState& st = states[static_cast<std::size_t>(c)];
        st.client_id = c;
        st.duration = detail::client_duration(cfg, c);
        st.model = global;
        st.base_round = 0;
        st.finish_time = st.duration;
        st.lr = cfg.lr_for_client(c);
    }

    HistoryBuffer buffer(cfg.hist.history_depth);
    UtilityTable utils(cfg.n_clients);

    ExperimentResult result;
    result.rounds.reserve(static_cast<std::size_t>(cfg.rounds));
    EvalResult eval;

    for (int round = 1; round <= cfg.rounds; ++round) {
        // The K earliest finishers; ties go to the lower client id.
        std::vector<int> order(static_cast<std::size_t>(cfg.n_clients));
        for (int c = 0; c < cfg.n_clients; ++c) order[static_cast<std::size_t>(c)] = c;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const double fa = states[static_cast<std::size_t>(a)].finish_time;
            const double fb = states[static_cast<std::size_t>(b)].finish_time;
            if (fa != fb) return fa < fb;
            return a < b;
        });
        std::vector<int> selected(order.begin(), order.begin() + cfg.k);
        double now = 0.0;
        for (const int c : selected) {
            now = std::max(now, states[static_cast<std::size_t>(c)].finish_time);
        }
        std::sort(selected.begin(), selected.end());  // records merge in client order

        std::vector<GradientVec> grads;
        detail::run_local_jobs(cfg, states, shards, selected, grads);

        std::vector<GradientRecord> records;
        records.reserve(selected.size());
        for (std::size_t i = 0; i < selected.size(); ++i) {
            const ClientState& st = states[static_cast<std::size_t>(selected[i])];
            GradientRecord rec;
            rec.client_id = st.client_id;
            rec.grad = std::move(grads[i]);
            rec.submit_round = round;
            rec.base_round = st.base_round;
            rec.staleness = std::max(1, round - st.base_round);
            rec.sample_count = shards[static_cast<std::size_t>(st.client_id)].size();
            records.push_back(std::move(rec));
        }

        const AggregateResult agg = aggregate(cfg.strategy, records, buffer, utils, cfg.hist);
        for (std::size_t j = 0; j < global.values.size(); ++j) {
            global.values[j] -= cfg.server_lr * agg.global[j];
        }

        // Hindsight pass: round - h is judged once its delayed evidence is in,
        // which is exactly before this round is pushed (the push would evict it).
        double deviation = std::numeric_limits<double>::quiet_NaN();
        if (cfg.strategy == Strategy::fedhist && round > cfg.hist.history_depth) {
            const std::vector<GradientRecord> fresh = buffer.fresh_set(round);
            if (const auto g_pred = predicted_unbiased(fresh)) {
                const int judged = round - cfg.hist.history_depth;
                for (const GradientRecord& rec : buffer.round_participants(judged)) {
                    utils.record(rec.client_id,
                                 utility(rec, *g_pred, static_cast<int>(fresh.size()), cfg.hist),
                                 cfg.hist.gamma);
                }
                if (const GradientVec* g_act = buffer.global_for_round(judged)) {
                    double sq = 0.0;
                    for (std::size_t j = 0; j < g_pred->size(); ++j) {
                        const double d = (*g_act)[j] - (*g_pred)[j];
                        sq += d * d;
                    }
                    deviation = std::sqrt(sq);
                }
            }
        }

        const double grad_norm = l2_norm(agg.global);
        buffer.push_round(round, agg.global, std::move(records));

        RoundRecord rr;
        rr.round = round;
        rr.sim_time = now;
        rr.participants = selected;
        rr.weights = agg.weights;
        rr.global_grad_norm = grad_norm;
        rr.pred_act_deviation = deviation;
        for (const int c : selected) {
            ClientState& st = states[static_cast<std::size_t>(c)];
            const int tau = std::max(1, round - st.base_round);
            rr.staleness.push_back(tau);
            st.participations += 1;
            st.staleness_sum += tau;
            st.staleness_max = std::max(st.staleness_max, tau);
            st.model = global;
            st.base_round = round;
            st.finish_time = now + st.duration;
            st.job_index += 1;
        }

        eval = evaluate(global, test);
        rr.test_accuracy = eval.accuracy;
        rr.test_loss = eval.loss;
        result.best_accuracy = std::max(result.best_accuracy, eval.accuracy);
        result.rounds.push_back(std::move(rr));
    }

    result.final_accuracy = eval.accuracy;
    result.final_loss = eval.loss;
    result.final_per_class_accuracy = eval.per_class_accuracy();

    long long total_tau = 0, total_n = 0;
    result.clients.reserve(states.size());
    for (const ClientState& st : states) {
        ClientSummary cs;
        cs.client_id = st.client_id;
        cs.sample_count = shards[static_cast<std::size_t>(st.client_id)].size();
        cs.duration = st.duration;
        cs.participations = st.participations;
        if (st.participations > 0) {
            cs.mean_staleness =
                static_cast<double>(st.staleness_sum) / static_cast<double>(st.participations);
        }
        cs.max_staleness = st.staleness_max;
        cs.final_avg_utility = utils.average(st.client_id);
        result.clients.push_back(cs);
        total_tau += st.staleness_sum;
        total_n += st.participations;
        result.max_staleness = std::max(result.max_staleness, st.staleness_max);
    }
    result.mean_staleness =
        total_n > 0 ? static_cast<double>(total_tau) / static_cast<double>(total_n) : 0.0;
    return result;
}

}  // namespace fedhist
