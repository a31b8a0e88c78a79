#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "brima/data.hpp"
#include "brima/model.hpp"

namespace brima {

struct MemoryEntry {
    MultiModalSample sample;  // always modality-complete
    double predicted_score = 0.0;
    double priority = 0.0;
    double distortion = 0.0;
    double drift = 0.0;
    int insertion_session = 0;
    long insertion_order = 0;
};

struct MemoryBuffer {
    int capacity = 50;
    std::vector<MemoryEntry> entries;
    long next_insertion_order = 0;

    bool empty() const { return entries.empty(); }
    int size() const { return static_cast<int>(entries.size()); }
};

struct SelectionDiagnostics {
    // First-round partition stats: modality-complete candidates per quantile
    // bin and how many ended up selected from each.
    std::vector<int> bin_complete;
    std::vector<int> bin_selected;
    int rounds = 0;
};

// Ranks samples by predicted score, partitions them into `quantile_bins`
// equal-count bins and picks modality-complete samples per bin at seeded
// random, re-ranking the unselected pool while the buffer is underfull and
// complete samples remain. Returns at most `capacity` fresh entries.
MemoryBuffer select_memory(const std::vector<MultiModalSample>& samples,
                           const Vector& predictions, int quantile_bins, int capacity,
                           std::uint64_t seed, SelectionDiagnostics* diag = nullptr);

// Appends the fresh entries from `incoming` and, if the total exceeds
// `total_capacity`, evicts the lowest-priority entries among the previously
// held ones.
void merge_memory(MemoryBuffer& buffer, MemoryBuffer incoming, int session, int total_capacity);

// Squared Euclidean distance between an imputed feature and the stored one.
double modality_distortion(const Vector& imputed, const Vector& truth);

// Absolute difference between the current and snapshot scorer on the
// entry's stored features. Defined as 0 when no snapshot exists yet.
double score_drift(const ScoringModel& current, const ScoringModel* snapshot,
                   const MemoryEntry& entry);

double replay_priority(double distortion, double drift, double alpha);

// Draws `batch` distinct entry indices with probability proportional to
// priority + 1e-6, sequentially without replacement. A batch larger than
// the buffer returns every index.
std::vector<int> sample_replay(const MemoryBuffer& buffer, int batch, std::uint64_t seed);
std::vector<int> sample_uniform(const MemoryBuffer& buffer, int batch, std::uint64_t seed);

// Mean squared gap between the current and snapshot scorers over a replay
// batch; gradients (scaled by grad_scale) flow only into the current model.
double consistency_loss(const ScoringModel& current, const ScoringModel* snapshot,
                        const std::vector<const MemoryEntry*>& batch,
                        PerceptronGrads* grads = nullptr, double grad_scale = 1.0);

// Line-delimited export in the dataset format plus predicted_score and
// priority fields, for the report tooling.
void export_buffer(const MemoryBuffer& buffer, const TaskStream& stream, const std::string& path);

}  // namespace brima
