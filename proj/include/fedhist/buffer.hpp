#pragma once

// Server-side history buffer: a ring of the last h rounds' global gradients
// and submitted local-gradient records. Feeds collaborative-gradient
// selection and the hindsight (relatively fresh) replay.

#include <algorithm>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedhist/gradmath.hpp"

namespace fedhist {

// A submitted gradient plus its provenance.
struct GradientRecord {
    int client_id = 0;
    GradientVec grad;
    int submit_round = 0;
    int base_round = 0;   // round of the global model the client trained from
    int staleness = 1;    // submit_round - base_round, always >= 1
    int sample_count = 1;
};

class HistoryBuffer {
public:
    explicit HistoryBuffer(int depth) : depth_(depth) {
        if (depth < 1) throw std::invalid_argument("HistoryBuffer: depth must be >= 1");
    }

    int depth() const { return depth_; }
    int size() const { return static_cast<int>(ring_.size()); }
    bool empty() const { return ring_.empty(); }
    int oldest_round() const { return ring_.empty() ? 0 : ring_.front().round; }
    int latest_round() const { return ring_.empty() ? 0 : ring_.back().round; }

    // Appends one completed round; rounds must be consecutive. The oldest
    // entry is evicted once more than `depth` rounds are held.
    void push_round(int round, GradientVec global_grad, std::vector<GradientRecord> local_records) {
        if (!ring_.empty() && round != ring_.back().round + 1) {
            throw std::invalid_argument("push_round: expected round " +
                                        std::to_string(ring_.back().round + 1) + ", got " +
                                        std::to_string(round));
        }
        ring_.push_back({round, std::move(global_grad), std::move(local_records)});
        if (static_cast<int>(ring_.size()) > depth_) ring_.pop_front();
    }

    // The cached global gradient minimizing cosine similarity with g; ties go
    // to the most recent round. Empty history yields no collaborative gradient
    // and the caller skips fusion.
    std::optional<GradientVec> select_collaborative(const GradientVec& g) const {
        if (ring_.empty()) return std::nullopt;
        const GradientVec* best = nullptr;
        double best_sim = 0.0;
        for (const auto& entry : ring_) {
            const double sim = cosine_similarity(g, entry.global);
            if (best == nullptr || sim <= best_sim) {
                best = &entry.global;
                best_sim = sim;
            }
        }
        return *best;
    }

    // The set S of updates relatively fresh to round (current_round - depth):
    // records trained from the global model of round current_round - depth - 1,
    // i.e. staleness 1 relative to that round. Empty while current_round is
    // still inside the warm-up window. Ordered by (submit_round, client_id).
    std::vector<GradientRecord> fresh_set(int current_round) const {
        std::vector<GradientRecord> out;
        if (current_round <= depth_) return out;
        const int wanted_base = current_round - depth_ - 1;
        for (const auto& entry : ring_) {
            for (const auto& record : entry.locals) {
                if (record.base_round == wanted_base) out.push_back(record);
            }
        }
        std::sort(out.begin(), out.end(), [](const GradientRecord& a, const GradientRecord& b) {
            if (a.submit_round != b.submit_round) return a.submit_round < b.submit_round;
            return a.client_id < b.client_id;
        });
        return out;
    }

    // The records pushed for `round`, in push order.
    const std::vector<GradientRecord>& round_participants(int round) const {
        const Entry* entry = find(round);
        if (entry == nullptr) {
            throw std::invalid_argument("round_participants: round " + std::to_string(round) +
                                        " not retained");
        }
        return entry->locals;
    }

    // Cached global gradient of `round`, or nullptr when evicted/never pushed.
    const GradientVec* global_for_round(int round) const {
        const Entry* entry = find(round);
        return entry == nullptr ? nullptr : &entry->global;
    }

private:
    struct Entry {
        int round;
        GradientVec global;
        std::vector<GradientRecord> locals;
    };

    const Entry* find(int round) const {
        if (ring_.empty() || round < ring_.front().round || round > ring_.back().round) return nullptr;
        return &ring_[static_cast<std::size_t>(round - ring_.front().round)];
    }

    int depth_;
    std::deque<Entry> ring_;
};

}  // namespace fedhist
