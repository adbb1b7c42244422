#include "fedhist/simulator.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

namespace fedhist {
namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.n_clients = 4;
    cfg.k = 2;
    cfg.rounds = 10;
    cfg.seed = 11;
    cfg.classes = 3;
    cfg.dim = 4;
    cfg.per_class = 30;
    cfg.hidden_dim = 0;
    cfg.client_lr = 0.1;
    cfg.local_steps = 2;
    cfg.batch_size = 8;
    cfg.beta = 1.0;
    cfg.hist.history_depth = 3;
    return cfg;
}

RoundRecord round_with(int round, std::vector<int> participants, std::vector<int> staleness,
                       double accuracy) {
    RoundRecord r;
    r.round = round;
    r.participants = std::move(participants);
    r.staleness = std::move(staleness);
    r.test_accuracy = accuracy;
    return r;
}

TEST(StalenessStats, HandCases) {
    std::vector<RoundRecord> all_one{round_with(1, {0, 1}, {1, 1}, 0.1),
                                     round_with(2, {0, 1}, {1, 1}, 0.2)};
    EXPECT_DOUBLE_EQ(staleness_stats(all_one).mean, 1.0);
    EXPECT_EQ(staleness_stats(all_one).max, 1);

    std::vector<RoundRecord> alternating{round_with(1, {0}, {1}, 0.1), round_with(2, {1}, {3}, 0.1),
                                         round_with(3, {0}, {1}, 0.1), round_with(4, {1}, {3}, 0.1)};
    const auto stats = staleness_stats(alternating);
    EXPECT_DOUBLE_EQ(stats.mean, 2.0);
    EXPECT_EQ(stats.max, 3);
    EXPECT_DOUBLE_EQ(stats.per_client_mean.at(0), 1.0);
    EXPECT_DOUBLE_EQ(stats.per_client_mean.at(1), 3.0);
    EXPECT_EQ(stats.per_client_max.at(1), 3);

    EXPECT_THROW(staleness_stats({}), std::invalid_argument);
}

TEST(RoundsToAccuracy, HandCases) {
    std::vector<RoundRecord> recs{round_with(1, {}, {}, 0.1), round_with(2, {}, {}, 0.5),
                                  round_with(3, {}, {}, 0.7)};
    EXPECT_EQ(rounds_to_accuracy(recs, 0.6), 3);
    EXPECT_EQ(rounds_to_accuracy(recs, 0.05), 1);
    EXPECT_FALSE(rounds_to_accuracy(recs, 0.99).has_value());
    EXPECT_THROW(rounds_to_accuracy(recs, 0.0), std::invalid_argument);
    EXPECT_THROW(rounds_to_accuracy(recs, 1.0), std::invalid_argument);
}

TEST(RunExperiment, BasicShapeAndInvariants) {
    const ExperimentConfig cfg = small_config();
    const ExperimentResult result = run_experiment(cfg);
    ASSERT_EQ(result.rounds.size(), 10u);
    double prev_time = 0.0;
    for (const auto& r : result.rounds) {
        ASSERT_EQ(r.participants.size(), 2u);
        ASSERT_EQ(r.staleness.size(), 2u);
        ASSERT_EQ(r.weights.size(), 2u);
        for (const int tau : r.staleness) EXPECT_GE(tau, 1);
        EXPECT_GE(r.sim_time, prev_time);
        prev_time = r.sim_time;
        double wsum = 0.0;
        for (const double w : r.weights) wsum += w;
        EXPECT_NEAR(wsum, 1.0, 1e-12);
        EXPECT_TRUE(std::isfinite(r.test_loss));
    }
    ASSERT_EQ(result.clients.size(), 4u);
    long long participations = 0;
    for (const auto& c : result.clients) participations += c.participations;
    EXPECT_EQ(participations, 20);  // K per round
    EXPECT_EQ(result.final_accuracy, result.rounds.back().test_accuracy);
    EXPECT_GE(result.best_accuracy, result.final_accuracy);
    ASSERT_EQ(result.final_per_class_accuracy.size(), 3u);
}

TEST(RunExperiment, DeterministicAcrossRunsAndWorkers) {
    ExperimentConfig cfg = small_config();
    cfg.strategy = Strategy::fedhist;
    const ExperimentResult a = run_experiment(cfg);
    const ExperimentResult b = run_experiment(cfg);
    cfg.workers = 3;
    const ExperimentResult c = run_experiment(cfg);
    ASSERT_EQ(a.rounds.size(), b.rounds.size());
    ASSERT_EQ(a.rounds.size(), c.rounds.size());
    for (std::size_t i = 0; i < a.rounds.size(); ++i) {
        EXPECT_EQ(a.rounds[i].test_accuracy, b.rounds[i].test_accuracy);
        EXPECT_EQ(a.rounds[i].test_loss, b.rounds[i].test_loss);
        EXPECT_EQ(a.rounds[i].participants, b.rounds[i].participants);
        EXPECT_EQ(a.rounds[i].weights, b.rounds[i].weights);
        EXPECT_EQ(a.rounds[i].test_accuracy, c.rounds[i].test_accuracy);
        EXPECT_EQ(a.rounds[i].test_loss, c.rounds[i].test_loss);
        EXPECT_EQ(a.rounds[i].participants, c.rounds[i].participants);
        EXPECT_EQ(a.rounds[i].weights, c.rounds[i].weights);
    }
}

// With N = K and equal speeds the loop degenerates to synchronous FedAvg;
// an independently coded synchronous loop must match bit for bit.
TEST(RunExperiment, SynchronousDegeneracyBitForBit) {
    ExperimentConfig cfg = small_config();
    cfg.n_clients = 3;
    cfg.k = 3;
    cfg.rounds = 50;
    cfg.strategy = Strategy::fedavg;
    cfg.speed_model = "constant";
    cfg.speed_value = 1.0;
    const ExperimentResult result = run_experiment(cfg);

    const TrainTestSplit split =
        generate_synthetic(cfg.classes, cfg.dim, cfg.per_class, cfg.spread, cfg.seed);
    const auto shards = dirichlet_partition(split.train, cfg.partition_spec());
    const Batch test = full_batch(split.test);
    RandomStream init_rng(derive_seed(cfg.seed, StreamTag::init));
    ModelParams model = init_params({split.train.dim, 0, split.train.class_count}, init_rng);

    int total_samples = 0;
    for (const auto& s : shards) total_samples += s.size();

    for (int round = 1; round <= cfg.rounds; ++round) {
        std::vector<GradientVec> grads;
        for (int c = 0; c < 3; ++c) {
            RandomStream job(derive_seed(cfg.seed, StreamTag::local_job,
                                         static_cast<std::uint64_t>(c),
                                         static_cast<std::uint64_t>(round - 1)));
            grads.push_back(local_train(model, shards[static_cast<std::size_t>(c)], cfg.client_lr,
                                        cfg.local_steps, cfg.batch_size, job));
        }
        GradientVec agg(model.values.size(), 0.0);
        for (int c = 0; c < 3; ++c) {
            const double w =
                static_cast<double>(shards[static_cast<std::size_t>(c)].size()) / total_samples;
            for (std::size_t j = 0; j < agg.size(); ++j) agg[j] += w * grads[static_cast<std::size_t>(c)][j];
        }
        for (std::size_t j = 0; j < model.values.size(); ++j) model.values[j] -= cfg.server_lr * agg[j];
        const EvalResult ev = evaluate(model, test);

        const RoundRecord& r = result.rounds[static_cast<std::size_t>(round - 1)];
        ASSERT_EQ(r.participants, (std::vector<int>{0, 1, 2}));
        ASSERT_EQ(r.staleness, (std::vector<int>{1, 1, 1}));
        ASSERT_EQ(r.sim_time, static_cast<double>(round));
        ASSERT_EQ(r.global_grad_norm, l2_norm(agg));
        ASSERT_EQ(r.test_accuracy, ev.accuracy);
        ASSERT_EQ(r.test_loss, ev.loss);
    }
}

// Two clients with job durations 1 and 3, K=1: replaying the selection rules
// by hand, the slow client lands in every 4th round with staleness 4 (it
// restarts only at the round time of its own submission), and the fast client
// covers the rest with staleness 2 right after each slow round.
TEST(RunExperiment, TwoClientScheduleOracle) {
    ExperimentConfig cfg = small_config();
    cfg.n_clients = 2;
    cfg.k = 1;
    cfg.rounds = 24;
    cfg.strategy = Strategy::fedavg;
    cfg.speed_model = "bimodal";
    cfg.speed_fast = 1.0;
    cfg.speed_slow = 3.0;
    cfg.slow_fraction = 0.5;

    bool found = false;
    for (std::uint64_t seed = 1; seed < 200; ++seed) {
        cfg.seed = seed;
        if (detail::client_duration(cfg, 0) == 1.0 && detail::client_duration(cfg, 1) == 3.0) {
            found = true;
            break;
        }
    }
    ASSERT_TRUE(found);

    const ExperimentResult result = run_experiment(cfg);
    for (const auto& r : result.rounds) {
        ASSERT_EQ(r.participants.size(), 1u);
        if (r.round % 4 == 0) {
            EXPECT_EQ(r.participants[0], 1) << "round " << r.round;
            EXPECT_EQ(r.staleness[0], 4) << "round " << r.round;
        } else {
            EXPECT_EQ(r.participants[0], 0) << "round " << r.round;
            const int expected_tau = (r.round % 4 == 1 && r.round > 1) ? 2 : 1;
            EXPECT_EQ(r.staleness[0], expected_tau) << "round " << r.round;
        }
    }
    // Steady state: every window of 4 rounds advances simulated time by 3.
    EXPECT_DOUBLE_EQ(result.rounds[3].sim_time, 3.0);
    EXPECT_DOUBLE_EQ(result.rounds[7].sim_time, 6.0);
    const auto stats = staleness_stats(result.rounds);
    EXPECT_EQ(stats.max, 4);
}

// The participant choice must always be the K smallest finish times with
// lower ids winning ties; verified against a brute-force shadow scheduler.
TEST(RunExperiment, SelectionMatchesShadowScheduler) {
    RandomStream pick(404);
    for (int trial = 0; trial < 6; ++trial) {
        ExperimentConfig cfg = small_config();
        cfg.n_clients = 3 + static_cast<int>(pick.uniform_int(6));
        cfg.k = 1 + static_cast<int>(pick.uniform_int(static_cast<std::uint64_t>(cfg.n_clients)));
        cfg.rounds = 25;
        cfg.seed = 700 + static_cast<std::uint64_t>(trial);
        cfg.strategy = Strategy::fedavg;
        cfg.speed_model = trial % 2 == 0 ? "uniform" : "bimodal";
        const ExperimentResult result = run_experiment(cfg);

        std::vector<double> finish(static_cast<std::size_t>(cfg.n_clients));
        std::vector<double> duration(static_cast<std::size_t>(cfg.n_clients));
        std::vector<int> last_round(static_cast<std::size_t>(cfg.n_clients), 0);
        for (int c = 0; c < cfg.n_clients; ++c) {
            duration[static_cast<std::size_t>(c)] = result.clients[static_cast<std::size_t>(c)].duration;
            finish[static_cast<std::size_t>(c)] = duration[static_cast<std::size_t>(c)];
        }
        for (const auto& r : result.rounds) {
            std::vector<bool> taken(static_cast<std::size_t>(cfg.n_clients), false);
            std::vector<int> expect_ids;
            double t = 0.0;
            for (int pickk = 0; pickk < cfg.k; ++pickk) {
                int best = -1;
                for (int c = 0; c < cfg.n_clients; ++c) {
                    if (taken[static_cast<std::size_t>(c)]) continue;
                    if (best < 0 || finish[static_cast<std::size_t>(c)] < finish[static_cast<std::size_t>(best)]) {
                        best = c;
                    }
                }
                taken[static_cast<std::size_t>(best)] = true;
                expect_ids.push_back(best);
                t = std::max(t, finish[static_cast<std::size_t>(best)]);
            }
            std::sort(expect_ids.begin(), expect_ids.end());
            ASSERT_EQ(r.participants, expect_ids) << "round " << r.round;
            ASSERT_EQ(r.sim_time, t);
            for (std::size_t i = 0; i < expect_ids.size(); ++i) {
                const int c = expect_ids[i];
                EXPECT_EQ(r.staleness[i], r.round - last_round[static_cast<std::size_t>(c)]);
                last_round[static_cast<std::size_t>(c)] = r.round;
                finish[static_cast<std::size_t>(c)] = t + duration[static_cast<std::size_t>(c)];
            }
        }
    }
}

TEST(RunExperiment, MeanStalenessNearClientsOverK) {
    ExperimentConfig cfg = small_config();
    cfg.n_clients = 20;
    cfg.k = 2;
    cfg.rounds = 150;
    cfg.per_class = 40;
    cfg.strategy = Strategy::fedavg;
    cfg.speed_model = "uniform";
    const ExperimentResult result = run_experiment(cfg);
    // N/(2K) = 5; accept a generous [0.5, 2.0] x N/K band around it: [5, 20].
    EXPECT_GE(result.mean_staleness, 5.0);
    EXPECT_LE(result.mean_staleness, 20.0);
}

TEST(RunExperiment, FedhistProducesHindsightMetrics) {
    ExperimentConfig cfg = small_config();
    cfg.strategy = Strategy::fedhist;
    cfg.rounds = 12;
    const ExperimentResult result = run_experiment(cfg);
    for (int i = 0; i < cfg.hist.history_depth; ++i) {
        EXPECT_TRUE(std::isnan(result.rounds[static_cast<std::size_t>(i)].pred_act_deviation));
    }
    bool any_defined = false;
    for (const auto& r : result.rounds) {
        if (!std::isnan(r.pred_act_deviation)) {
            any_defined = true;
            EXPECT_GE(r.pred_act_deviation, 0.0);
            EXPECT_GT(r.round, cfg.hist.history_depth);
        }
    }
    EXPECT_TRUE(any_defined);
    bool any_util = false;
    for (const auto& c : result.clients) {
        if (c.final_avg_utility != 0.0) any_util = true;
    }
    EXPECT_TRUE(any_util);
}

TEST(RunExperiment, BaselinesLeaveUtilityUntouched) {
    ExperimentConfig cfg = small_config();
    cfg.strategy = Strategy::dynsgd;
    const ExperimentResult result = run_experiment(cfg);
    for (const auto& c : result.clients) EXPECT_EQ(c.final_avg_utility, 0.0);
    for (const auto& r : result.rounds) EXPECT_TRUE(std::isnan(r.pred_act_deviation));
}

TEST(RunExperiment, InvalidConfigRejected) {
    ExperimentConfig cfg = small_config();
    cfg.k = 9;
    EXPECT_THROW(run_experiment(cfg), std::invalid_argument);
}

}  // namespace
}  // namespace fedhist
