#pragma once

// Dataset handling: synthetic Gaussian-blob generation, CSV ingestion and
// Dirichlet non-IID partitioning across clients.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedhist/rng.hpp"

namespace fedhist {

struct Dataset {
    int dim = 0;
    int class_count = 0;
    std::vector<double> features;  // row-major, size() x dim
    std::vector<int> labels;       // values in [0, class_count)

    int size() const { return static_cast<int>(labels.size()); }

    const double* row(int i) const {
        return features.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim);
    }

    void append_row(const Dataset& src, int i) {
        features.insert(features.end(), src.row(i), src.row(i) + src.dim);
        labels.push_back(src.labels[static_cast<std::size_t>(i)]);
    }
};

struct TrainTestSplit {
    Dataset train;
    Dataset test;
};

// One Gaussian blob per class. Class c is centred on coordinate axis c % dim
// at magnitude 1 + c / dim, so neighbouring means are one unit apart along an
// axis and distinct classes never share a mean.
inline Dataset synthesize_full(int class_count, int dim, int per_class, double spread,
                               std::uint64_t seed) {
    if (class_count < 1 || dim < 1 || per_class < 1) {
        throw std::invalid_argument("synthesize_full: class_count, dim and per_class must be >= 1");
    }
    if (spread < 0.0) throw std::invalid_argument("synthesize_full: spread must be >= 0");
    RandomStream rng(derive_seed(seed, StreamTag::data));
    Dataset out;
    out.dim = dim;
    out.class_count = class_count;
    out.features.reserve(static_cast<std::size_t>(class_count) * per_class * dim);
    out.labels.reserve(static_cast<std::size_t>(class_count) * per_class);
    for (int c = 0; c < class_count; ++c) {
        const int axis = c % dim;
        const double magnitude = 1.0 + static_cast<double>(c / dim);
        for (int s = 0; s < per_class; ++s) {
            for (int j = 0; j < dim; ++j) {
                const double mean = (j == axis) ? magnitude : 0.0;
                out.features.push_back(mean + spread * rng.normal());
            }
            out.labels.push_back(c);
        }
    }
    return out;
}

// Seeded shuffle followed by an 80/20 train/test split.
inline TrainTestSplit split_train_test(const Dataset& data, std::uint64_t seed) {
    if (data.size() < 2) throw std::invalid_argument("split_train_test: need at least 2 samples");
    RandomStream rng(derive_seed(seed, StreamTag::data, /*split salt*/ 17));
    std::vector<int> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const int test_n = data.size() / 5;
    const int train_n = data.size() - test_n;
    TrainTestSplit out;
    out.train.dim = out.test.dim = data.dim;
    out.train.class_count = out.test.class_count = data.class_count;
    for (int i = 0; i < train_n; ++i) out.train.append_row(data, order[static_cast<std::size_t>(i)]);
    for (int i = train_n; i < data.size(); ++i) out.test.append_row(data, order[static_cast<std::size_t>(i)]);
    return out;
}

inline TrainTestSplit generate_synthetic(int class_count, int dim, int per_class, double spread,
                                         std::uint64_t seed) {
    return split_train_test(synthesize_full(class_count, dim, per_class, spread, seed), seed);
}

constexpr double kIidBeta = std::numeric_limits<double>::infinity();

struct PartitionSpec {
    int client_count = 2;
    double beta = kIidBeta;  // infinity marks the IID split
    std::uint64_t seed = 0;
    int isolate_class = -1;              // < 0 disables the fairness probe
    std::vector<int> isolate_clients;    // receivers of the isolated class

    bool iid() const { return std::isinf(beta); }
};

namespace detail {

// Largest-remainder apportionment of `total` items by the given proportions.
inline std::vector<int> largest_remainder_counts(const std::vector<double>& proportions, int total) {
    const std::size_t n = proportions.size();
    std::vector<int> counts(n, 0);
    std::vector<std::pair<double, std::size_t>> fractions;
    fractions.reserve(n);
    int assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double target = proportions[i] * total;
        counts[i] = static_cast<int>(std::floor(target));
        assigned += counts[i];
        fractions.emplace_back(target - std::floor(target), i);
    }
    std::sort(fractions.begin(), fractions.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int r = 0; r < total - assigned; ++r) counts[fractions[static_cast<std::size_t>(r)].second] += 1;
    return counts;
}

}  // namespace detail

// Splits `data` into client_count shards. Non-IID shards draw per-class client
// proportions from Dir(beta * 1_N); the IID marker deals each class round-robin
// after a seeded shuffle. Every sample is assigned exactly once and empty
// shards are repaired by moving one sample from the currently largest shard.
inline std::vector<Dataset> dirichlet_partition(const Dataset& data, const PartitionSpec& spec) {
    const int n_clients = spec.client_count;
    if (n_clients < 2) throw std::invalid_argument("dirichlet_partition: client_count must be >= 2");
    if (!(spec.beta > 0.0)) throw std::invalid_argument("dirichlet_partition: beta must be > 0");
    if (data.size() == 0) throw std::invalid_argument("dirichlet_partition: dataset is empty");
    if (n_clients > data.size()) {
        throw std::invalid_argument("dirichlet_partition: more clients (" + std::to_string(n_clients) +
                                    ") than samples (" + std::to_string(data.size()) + ")");
    }
    if (spec.isolate_class >= data.class_count) {
        throw std::invalid_argument("dirichlet_partition: isolate_class out of range");
    }
    if (spec.isolate_class >= 0) {
        if (spec.isolate_clients.empty()) {
            throw std::invalid_argument("dirichlet_partition: isolate_class set but isolate_clients empty");
        }
        for (const int c : spec.isolate_clients) {
            if (c < 0 || c >= n_clients) {
                throw std::invalid_argument("dirichlet_partition: isolate client id out of range");
            }
        }
    }

    RandomStream rng(derive_seed(spec.seed, StreamTag::partition));

    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(data.class_count));
    for (int i = 0; i < data.size(); ++i) {
        by_class[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])].push_back(i);
    }

    std::vector<std::vector<int>> shard_indices(static_cast<std::size_t>(n_clients));
    for (int c = 0; c < data.class_count; ++c) {
        auto& indices = by_class[static_cast<std::size_t>(c)];
        if (indices.empty()) continue;
        rng.shuffle(indices);
        if (c == spec.isolate_class) {
            // Fairness probe: the isolated class lives only on the named clients.
            for (std::size_t i = 0; i < indices.size(); ++i) {
                const int owner = spec.isolate_clients[i % spec.isolate_clients.size()];
                shard_indices[static_cast<std::size_t>(owner)].push_back(indices[i]);
            }
        } else if (spec.iid()) {
            // Per-class round-robin keeps every shard's class histogram within
            // one sample of uniform; the start offset rotates so remainders do
            // not pile onto client 0.
            for (std::size_t i = 0; i < indices.size(); ++i) {
                const int owner = static_cast<int>((i + static_cast<std::size_t>(c)) %
                                                   static_cast<std::size_t>(n_clients));
                shard_indices[static_cast<std::size_t>(owner)].push_back(indices[i]);
            }
        } else {
            const std::vector<double> proportions = rng.dirichlet(spec.beta, static_cast<std::size_t>(n_clients));
            const std::vector<int> counts =
                detail::largest_remainder_counts(proportions, static_cast<int>(indices.size()));
            std::size_t cursor = 0;
            for (int owner = 0; owner < n_clients; ++owner) {
                for (int k = 0; k < counts[static_cast<std::size_t>(owner)]; ++k) {
                    shard_indices[static_cast<std::size_t>(owner)].push_back(indices[cursor++]);
                }
            }
        }
    }

    // Empty-shard repair: local loss divides by shard size, so no shard may be
    // empty. Moves one sample at a time from the largest shard.
    for (int owner = 0; owner < n_clients; ++owner) {
        auto& shard = shard_indices[static_cast<std::size_t>(owner)];
        while (shard.empty()) {
            int donor = -1;
            std::size_t donor_size = 1;
            for (int d = 0; d < n_clients; ++d) {
                const std::size_t sz = shard_indices[static_cast<std::size_t>(d)].size();
                if (sz > donor_size) {
                    donor = d;
                    donor_size = sz;
                }
            }
            if (donor < 0) throw std::runtime_error("dirichlet_partition: cannot repair empty shard");
            auto& donor_shard = shard_indices[static_cast<std::size_t>(donor)];
            shard.push_back(donor_shard.back());
            donor_shard.pop_back();
        }
    }

    std::vector<Dataset> shards(static_cast<std::size_t>(n_clients));
    for (int owner = 0; owner < n_clients; ++owner) {
        Dataset& shard = shards[static_cast<std::size_t>(owner)];
        shard.dim = data.dim;
        shard.class_count = data.class_count;
        for (const int i : shard_indices[static_cast<std::size_t>(owner)]) shard.append_row(data, i);
    }
    return shards;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

}  // namespace detail

// Reads rows of the form "f1,...,fd,label". An optional header row is detected
// by its first line not parsing as numbers. Labels are re-indexed densely from
// 0 in ascending order of their raw values.
inline Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");

    std::vector<double> features;
    std::vector<long> raw_labels;
    int dim = -1;
    std::string line;
    int line_no = 0;
    bool saw_first = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_fields(line);
        std::vector<double> values(fields.size());
        bool numeric = true;
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (!detail::parse_double(fields[i], values[i])) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (!saw_first) {
                saw_first = true;  // header row
                continue;
            }
            throw std::runtime_error("load_csv: malformed row at line " + std::to_string(line_no));
        }
        saw_first = true;
        if (fields.size() < 2) {
            throw std::runtime_error("load_csv: need at least one feature and a label at line " +
                                     std::to_string(line_no));
        }
        const int row_dim = static_cast<int>(fields.size()) - 1;
        if (dim < 0) {
            dim = row_dim;
        } else if (dim != row_dim) {
            throw std::runtime_error("load_csv: inconsistent dimension at line " + std::to_string(line_no) +
                                     " (expected " + std::to_string(dim) + " features, got " +
                                     std::to_string(row_dim) + ")");
        }
        const double raw_label = values.back();
        if (!(std::floor(raw_label) == raw_label) || !std::isfinite(raw_label)) {
            throw std::runtime_error("load_csv: non-integer label at line " + std::to_string(line_no));
        }
        features.insert(features.end(), values.begin(), values.end() - 1);
        raw_labels.push_back(static_cast<long>(raw_label));
    }
    if (raw_labels.empty()) throw std::runtime_error("load_csv: no data rows in '" + path + "'");

    std::vector<long> distinct = raw_labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    Dataset out;
    out.dim = dim;
    out.class_count = static_cast<int>(distinct.size());
    out.features = std::move(features);
    out.labels.reserve(raw_labels.size());
    for (const long raw : raw_labels) {
        const auto it = std::lower_bound(distinct.begin(), distinct.end(), raw);
        out.labels.push_back(static_cast<int>(it - distinct.begin()));
    }
    return out;
}

}  // namespace fedhist
