#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "fedhist/data.hpp"
#include "fedhist/strategies.hpp"

namespace fedhist {

// All knobs of a single experiment. Loaded from a flat key=value file
// ([section] headers and #/; comments are allowed and ignored), then
// optionally overridden by CLI key=value pairs.
struct ExperimentConfig {
    // Protocol.
    int n_clients = 20;
    int k = 2;
    int rounds = 300;
    std::uint64_t seed = 1;
    Strategy strategy = Strategy::fedhist;
    HistParams hist;

    // Optimization.
    double server_lr = 1.0;
    double client_lr = 0.05;
    std::vector<double> client_lrs;  // optional per-client override, length N
    int local_steps = 5;
    int batch_size = 32;
    int workers = 1;

    // Model.
    int hidden_dim = 32;  // 0 = plain logistic regression

    // Data.
    std::string dataset = "synthetic";  // "synthetic" | "csv"
    std::string csv_path;
    int classes = 10;
    int dim = 20;
    int per_class = 200;
    double spread = 1.0;
    double beta = 0.3;  // Dirichlet concentration; inf = IID
    int isolate_class = -1;
    std::vector<int> isolate_clients;  // defaults to {0, 1} when isolating
    double isolate_speed_factor = 2.0;

    // Client timing: per-client constant job duration.
    std::string speed_model = "uniform";  // "constant" | "uniform" | "bimodal"
    double speed_value = 1.0;
    double speed_min = 0.5;
    double speed_max = 2.0;
    double speed_fast = 1.0;
    double speed_slow = 2.0;
    double slow_fraction = 0.5;

    // Reporting: accuracy targets for rounds-to-target.
    std::vector<double> targets{0.6};

    bool iid() const { return std::isinf(beta); }

    double lr_for_client(int client_id) const {
        if (client_lrs.empty()) return client_lr;
        return client_lrs[static_cast<std::size_t>(client_id)];
    }

    PartitionSpec partition_spec() const {
        PartitionSpec spec;
        spec.client_count = n_clients;
        spec.beta = beta;
        spec.seed = seed;
        spec.isolate_class = isolate_class;
        spec.isolate_clients = isolate_clients;
        return spec;
    }

    void validate() const {
        auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
        if (n_clients < 1) fail("n_clients must be >= 1");
        if (k < 1) fail("k must be >= 1");
        if (k > n_clients)
            fail("k must be <= n_clients (k=" + std::to_string(k) +
                 ", n_clients=" + std::to_string(n_clients) + ")");
        if (rounds < 1) fail("rounds must be >= 1");
        try {
            hist.validate();
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
        if (!(server_lr > 0.0)) fail("server_lr must be > 0");
        if (!(client_lr > 0.0)) fail("client_lr must be > 0");
        if (!client_lrs.empty()) {
            if (client_lrs.size() != static_cast<std::size_t>(n_clients))
                fail("client_lrs must list exactly n_clients values");
            for (double lr : client_lrs)
                if (!(lr > 0.0)) fail("client_lrs entries must be > 0");
        }
        if (local_steps < 1) fail("local_steps must be >= 1");
        if (batch_size < 1) fail("batch_size must be >= 1");
        if (workers < 1) fail("workers must be >= 1");
        if (hidden_dim < 0) fail("hidden_dim must be >= 0");
        if (dataset != "synthetic" && dataset != "csv")
            fail("dataset must be 'synthetic' or 'csv', got '" + dataset + "'");
        if (dataset == "csv" && csv_path.empty()) fail("csv_path is required when dataset=csv");
        if (dataset == "synthetic") {
            if (classes < 2) fail("classes must be >= 2");
            if (dim < 1) fail("dim must be >= 1");
            if (per_class < 1) fail("per_class must be >= 1");
            if (!(spread > 0.0)) fail("spread must be > 0");
        }
        if (!(beta > 0.0)) fail("beta must be > 0 (or 'inf' for IID)");
        if (isolate_class >= 0) {
            for (int c : isolate_clients)
                if (c < 0 || c >= n_clients)
                    fail("isolate_clients entries must be in [0, n_clients)");
        }
        if (!(isolate_speed_factor > 0.0)) fail("isolate_speed_factor must be > 0");
        if (speed_model != "constant" && speed_model != "uniform" && speed_model != "bimodal")
            fail("speed_model must be 'constant', 'uniform' or 'bimodal', got '" + speed_model +
                 "'");
        if (!(speed_value > 0.0)) fail("speed_value must be > 0");
        if (!(speed_min > 0.0)) fail("speed_min must be > 0");
        if (speed_min > speed_max) fail("speed_min must be <= speed_max");
        if (!(speed_fast > 0.0)) fail("speed_fast must be > 0");
        if (!(speed_slow > 0.0)) fail("speed_slow must be > 0");
        if (slow_fraction < 0.0 || slow_fraction > 1.0) fail("slow_fraction must be in [0, 1]");
        if (targets.empty()) fail("targets must list at least one accuracy value");
        for (double t : targets)
            if (!(t > 0.0) || !(t < 1.0)) fail("targets entries must be in (0, 1)");
    }
};

namespace detail {

inline std::string strip_comment(std::string_view line) {
    auto pos = line.find_first_of("#;");
    if (pos != std::string_view::npos) line = line.substr(0, pos);
    return std::string(trim(line));
}

inline double config_double(const std::string& key, const std::string& value) {
    double out = 0.0;
    if (value == "inf" || value == "infinity") return std::numeric_limits<double>::infinity();
    if (!parse_double(value, out))
        throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + value +
                                    "'");
    return out;
}

inline long long config_int(const std::string& key, const std::string& value) {
    long long out = 0;
    const char* begin = value.data();
    const char* end = begin + value.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc{} || ptr != end)
        throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + value +
                                    "'");
    return out;
}

inline std::uint64_t config_uint(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    const char* begin = value.data();
    const char* end = begin + value.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc{} || ptr != end)
        throw std::invalid_argument("config: key '" + key +
                                    "' expects a non-negative integer, got '" + value + "'");
    return out;
}

inline bool config_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + value +
                                "'");
}

inline std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> parts;
    std::string_view rest = value;
    while (!rest.empty()) {
        auto comma = rest.find(',');
        std::string_view piece = rest.substr(0, comma);
        auto trimmed = trim(piece);
        if (!trimmed.empty()) parts.emplace_back(trimmed);
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return parts;
}

inline std::vector<double> config_double_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    for (const auto& piece : split_list(value)) out.push_back(config_double(key, piece));
    return out;
}

inline std::vector<int> config_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    for (const auto& piece : split_list(value))
        out.push_back(static_cast<int>(config_int(key, piece)));
    return out;
}

}  // namespace detail

// Applies one key=value assignment; throws on unknown keys or bad values.
inline void apply_config_kv(ExperimentConfig& cfg, const std::string& key,
                            const std::string& value) {
    using namespace detail;
    if (key == "n_clients") cfg.n_clients = static_cast<int>(config_int(key, value));
    else if (key == "k") cfg.k = static_cast<int>(config_int(key, value));
    else if (key == "rounds") cfg.rounds = static_cast<int>(config_int(key, value));
    else if (key == "seed") cfg.seed = config_uint(key, value);
    else if (key == "strategy") cfg.strategy = parse_strategy(value);
    else if (key == "alpha") cfg.hist.alpha = config_double(key, value);
    else if (key == "lambda") cfg.hist.lambda = config_double(key, value);
    else if (key == "gamma") cfg.hist.gamma = config_double(key, value);
    else if (key == "sim_threshold") cfg.hist.sim_threshold = config_double(key, value);
    else if (key == "history_depth") cfg.hist.history_depth = static_cast<int>(config_int(key, value));
    else if (key == "clamp_eps") cfg.hist.clamp_eps = config_double(key, value);
    else if (key == "server_lr") cfg.server_lr = config_double(key, value);
    else if (key == "client_lr") cfg.client_lr = config_double(key, value);
    else if (key == "client_lrs") cfg.client_lrs = config_double_list(key, value);
    else if (key == "local_steps") cfg.local_steps = static_cast<int>(config_int(key, value));
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(config_int(key, value));
    else if (key == "workers") cfg.workers = static_cast<int>(config_int(key, value));
    else if (key == "hidden_dim") cfg.hidden_dim = static_cast<int>(config_int(key, value));
    else if (key == "dataset") cfg.dataset = value;
    else if (key == "csv_path") cfg.csv_path = value;
    else if (key == "classes") cfg.classes = static_cast<int>(config_int(key, value));
    else if (key == "dim") cfg.dim = static_cast<int>(config_int(key, value));
    else if (key == "per_class") cfg.per_class = static_cast<int>(config_int(key, value));
    else if (key == "spread") cfg.spread = config_double(key, value);
    else if (key == "beta") cfg.beta = config_double(key, value);
    else if (key == "iid") {
        if (config_bool(key, value)) cfg.beta = kIidBeta;
    } else if (key == "isolate_class") cfg.isolate_class = static_cast<int>(config_int(key, value));
    else if (key == "isolate_clients") cfg.isolate_clients = config_int_list(key, value);
    else if (key == "isolate_speed_factor") cfg.isolate_speed_factor = config_double(key, value);
    else if (key == "speed_model") cfg.speed_model = value;
    else if (key == "speed_value") cfg.speed_value = config_double(key, value);
    else if (key == "speed_min") cfg.speed_min = config_double(key, value);
    else if (key == "speed_max") cfg.speed_max = config_double(key, value);
    else if (key == "speed_fast") cfg.speed_fast = config_double(key, value);
    else if (key == "speed_slow") cfg.speed_slow = config_double(key, value);
    else if (key == "slow_fraction") cfg.slow_fraction = config_double(key, value);
    else if (key == "targets") cfg.targets = config_double_list(key, value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

// Parses "key=value" (as used for CLI overrides).
inline std::pair<std::string, std::string> parse_kv_token(const std::string& token) {
    auto eq = token.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("config: expected key=value, got '" + token + "'");
    std::string key(detail::trim(std::string_view(token).substr(0, eq)));
    std::string value(detail::trim(std::string_view(token).substr(eq + 1)));
    if (key.empty()) throw std::invalid_argument("config: empty key in '" + token + "'");
    return {std::move(key), std::move(value)};
}

inline void apply_config_text(ExperimentConfig& cfg, std::istream& in, const std::string& origin) {
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = detail::strip_comment(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config: " + origin + " line " +
                                            std::to_string(line_no) + ": malformed section header");
            continue;  // sections are purely cosmetic
        }
        try {
            auto [key, value] = parse_kv_token(line);
            apply_config_kv(cfg, key, value);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(std::string(e.what()) + " (" + origin + " line " +
                                        std::to_string(line_no) + ")");
        }
    }
}

// Defaults -> file -> overrides, then a final validate. `path` may be empty to
// run on defaults + overrides alone.
inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides = {}) {
    ExperimentConfig cfg;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
        apply_config_text(cfg, in, path);
    }
    for (const auto& token : overrides) {
        auto [key, value] = parse_kv_token(token);
        apply_config_kv(cfg, key, value);
    }
    if (cfg.isolate_class >= 0 && cfg.isolate_clients.empty() && cfg.n_clients >= 2)
        cfg.isolate_clients = {0, 1};
    cfg.validate();
    return cfg;
}

}  // namespace fedhist
