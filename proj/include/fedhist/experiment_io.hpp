#pragma once

// Metric emission and the multi-strategy comparison harness. All numeric
// output goes through format_double (shortest round-trip form), so emitted
// files are byte-stable across runs and re-parse to the exact same values.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedhist/simulator.hpp"

namespace fedhist {

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void write_metrics_csv(const std::string& path, const std::vector<RoundRecord>& rounds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "round,time,accuracy,loss,mean_staleness,global_grad_norm,pred_act_deviation\n";
    for (const auto& r : rounds) {
        double tau_sum = 0.0;
        for (const int tau : r.staleness) tau_sum += tau;
        const double tau_mean = r.staleness.empty()
                                    ? std::numeric_limits<double>::quiet_NaN()
                                    : tau_sum / static_cast<double>(r.staleness.size());
        out << r.round << ',' << format_double(r.sim_time) << ','
            << format_double(r.test_accuracy) << ',' << format_double(r.test_loss) << ','
            << format_double(tau_mean) << ',' << format_double(r.global_grad_norm) << ','
            << format_double(r.pred_act_deviation) << '\n';
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline nlohmann::ordered_json summary_json(const ExperimentConfig& cfg,
                                           const ExperimentResult& result) {
    nlohmann::ordered_json j;
    j["strategy"] = strategy_name(cfg.strategy);
    j["seed"] = cfg.seed;
    j["rounds"] = static_cast<int>(result.rounds.size());
    j["final_accuracy"] = result.final_accuracy;
    j["best_accuracy"] = result.best_accuracy;
    j["final_loss"] = result.final_loss;
    j["final_per_class_accuracy"] = result.final_per_class_accuracy;
    j["mean_staleness"] = result.mean_staleness;
    j["max_staleness"] = result.max_staleness;
    nlohmann::ordered_json targets = nlohmann::ordered_json::object();
    for (const double t : cfg.targets) {
        const auto reached = rounds_to_accuracy(result.rounds, t);
        if (reached) {
            targets[format_double(t)] = *reached;
        } else {
            targets[format_double(t)] = nullptr;
        }
    }
    j["rounds_to_target"] = std::move(targets);
    nlohmann::ordered_json clients = nlohmann::ordered_json::array();
    for (const auto& c : result.clients) {
        nlohmann::ordered_json jc;
        jc["client_id"] = c.client_id;
        jc["samples"] = c.sample_count;
        jc["duration"] = c.duration;
        jc["participations"] = c.participations;
        if (c.participations > 0) {
            jc["mean_staleness"] = c.mean_staleness;
        } else {
            jc["mean_staleness"] = nullptr;
        }
        jc["max_staleness"] = c.max_staleness;
        jc["final_avg_utility"] = c.final_avg_utility;
        clients.push_back(std::move(jc));
    }
    j["clients"] = std::move(clients);
    return j;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// Runs one experiment and writes metrics.csv + summary.json into out_dir.
inline ExperimentResult run_to_files(const ExperimentConfig& cfg, const std::string& out_dir) {
    ExperimentResult result = run_experiment(cfg);
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    write_metrics_csv((dir / "metrics.csv").string(), result.rounds);
    write_text_file((dir / "summary.json").string(), summary_json(cfg, result).dump(2) + "\n");
    return result;
}

struct StrategyComparison {
    Strategy strategy = Strategy::fedavg;
    std::vector<double> final_accuracies;             // per seed
    std::vector<std::optional<int>> rounds_to_target;  // per seed
    double mean_final_accuracy = 0.0;
    double stddev_final_accuracy = 0.0;
    std::optional<double> mean_rounds;  // defined only when every seed reached
    std::optional<double> speedup;      // fedavg mean rounds / this mean rounds
};

struct ComparisonResult {
    double target = 0.0;
    std::vector<std::uint64_t> seeds;
    std::vector<StrategyComparison> rows;
};

// Runs every (strategy, seed) cell of the grid on the base config and reduces
// to per-strategy means. Speedups are taken against the fedavg row and marked
// undefined when either side never reaches the target (or fedavg is absent).
inline ComparisonResult compare_strategies(const ExperimentConfig& base,
                                           const std::vector<Strategy>& strategies,
                                           const std::vector<std::uint64_t>& seeds,
                                           double target) {
    if (strategies.empty()) throw std::invalid_argument("compare: need at least one strategy");
    if (seeds.empty()) throw std::invalid_argument("compare: need at least one seed");
    if (!(target > 0.0) || !(target < 1.0))
        throw std::invalid_argument("compare: target must be in (0, 1)");

    ComparisonResult out;
    out.target = target;
    out.seeds = seeds;
    for (const Strategy s : strategies) {
        StrategyComparison row;
        row.strategy = s;
        for (const std::uint64_t seed : seeds) {
            ExperimentConfig cfg = base;
            cfg.strategy = s;
            cfg.seed = seed;
            const ExperimentResult r = run_experiment(cfg);
            row.final_accuracies.push_back(r.final_accuracy);
            row.rounds_to_target.push_back(rounds_to_accuracy(r.rounds, target));
        }
        const double n = static_cast<double>(row.final_accuracies.size());
        double sum = 0.0;
        for (const double a : row.final_accuracies) sum += a;
        row.mean_final_accuracy = sum / n;
        double sq = 0.0;
        for (const double a : row.final_accuracies) {
            const double d = a - row.mean_final_accuracy;
            sq += d * d;
        }
        row.stddev_final_accuracy = n > 1.0 ? std::sqrt(sq / (n - 1.0)) : 0.0;
        bool all_reached = true;
        double rounds_sum = 0.0;
        for (const auto& r : row.rounds_to_target) {
            if (!r) {
                all_reached = false;
                break;
            }
            rounds_sum += *r;
        }
        if (all_reached) row.mean_rounds = rounds_sum / n;
        out.rows.push_back(std::move(row));
    }

    std::optional<double> fedavg_rounds;
    for (const auto& row : out.rows) {
        if (row.strategy == Strategy::fedavg) fedavg_rounds = row.mean_rounds;
    }
    for (auto& row : out.rows) {
        if (fedavg_rounds && row.mean_rounds) row.speedup = *fedavg_rounds / *row.mean_rounds;
    }
    return out;
}

inline void write_comparison_csv(const std::string& path, const ComparisonResult& cmp) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "strategy,mean_final_accuracy,stddev_final_accuracy,mean_rounds_to_target,"
           "speedup_vs_fedavg\n";
    for (const auto& row : cmp.rows) {
        out << strategy_name(row.strategy) << ',' << format_double(row.mean_final_accuracy) << ','
            << format_double(row.stddev_final_accuracy) << ','
            << (row.mean_rounds ? format_double(*row.mean_rounds) : "n/a") << ','
            << (row.speedup ? format_double(*row.speedup) : "n/a") << '\n';
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline nlohmann::ordered_json comparison_json(const ComparisonResult& cmp) {
    nlohmann::ordered_json j;
    j["target"] = cmp.target;
    j["seeds"] = cmp.seeds;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : cmp.rows) {
        nlohmann::ordered_json jr;
        jr["strategy"] = strategy_name(row.strategy);
        jr["mean_final_accuracy"] = row.mean_final_accuracy;
        jr["stddev_final_accuracy"] = row.stddev_final_accuracy;
        jr["final_accuracies"] = row.final_accuracies;
        nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
        for (const auto& r : row.rounds_to_target) {
            if (r) {
                rounds.push_back(*r);
            } else {
                rounds.push_back(nullptr);
            }
        }
        jr["rounds_to_target"] = std::move(rounds);
        if (row.mean_rounds) {
            jr["mean_rounds_to_target"] = *row.mean_rounds;
        } else {
            jr["mean_rounds_to_target"] = nullptr;
        }
        if (row.speedup) {
            jr["speedup_vs_fedavg"] = *row.speedup;
        } else {
            jr["speedup_vs_fedavg"] = nullptr;
        }
        rows.push_back(std::move(jr));
    }
    j["strategies"] = std::move(rows);
    return j;
}

// Simple CSV reader for emitted metrics (used by tests and downstream checks).
struct MetricsRow {
    int round = 0;
    double time = 0.0;
    double accuracy = 0.0;
    double loss = 0.0;
    double mean_staleness = 0.0;
    double global_grad_norm = 0.0;
    double pred_act_deviation = 0.0;
};

inline std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty metrics file '" + path + "'");
    std::vector<MetricsRow> rows;
    auto field_double = [&](std::string_view s) {
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        double v = 0.0;
        if (!detail::parse_double(s, v))
            throw std::runtime_error("bad numeric field '" + std::string(s) + "' in " + path);
        return v;
    };
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_fields(line);
        if (fields.size() != 7) throw std::runtime_error("bad metrics row in " + path);
        MetricsRow r;
        r.round = static_cast<int>(field_double(fields[0]));
        r.time = field_double(fields[1]);
        r.accuracy = field_double(fields[2]);
        r.loss = field_double(fields[3]);
        r.mean_staleness = field_double(fields[4]);
        r.global_grad_norm = field_double(fields[5]);
        r.pred_act_deviation = field_double(fields[6]);
        rows.push_back(r);
    }
    return rows;
}

// Writes a dataset in the gen-data CSV layout: f0..f{d-1},label.
inline void write_dataset_csv(const std::string& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (int j = 0; j < data.dim; ++j) out << 'f' << j << ',';
    out << "label\n";
    for (int i = 0; i < data.size(); ++i) {
        const double* row = data.row(i);
        for (int j = 0; j < data.dim; ++j) out << format_double(row[j]) << ',';
        out << data.labels[static_cast<std::size_t>(i)] << '\n';
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace fedhist
