#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "brima/numeric.hpp"

namespace brima {

// One instance with per-modality feature vectors. A missing modality has
// missing[m] == 1 and an empty feature slot; the observed set is never empty.
struct MultiModalSample {
    std::string id;
    int task_index = 0;
    double score = 0.0;
    std::vector<Vector> features;        // one slot per modality, empty when missing
    std::vector<std::uint8_t> missing;   // mask bits, 1 = missing

    int modality_count() const { return static_cast<int>(missing.size()); }
    bool is_complete() const;
    std::vector<int> observed() const;
};

struct TaskData {
    std::vector<MultiModalSample> train;
    std::vector<MultiModalSample> eval;
};

struct TaskStream {
    int modality_count = 0;
    std::vector<int> feature_dims;
    double score_min = 0.0;
    double score_max = 0.0;
    std::vector<TaskData> tasks;

    int task_count() const { return static_cast<int>(tasks.size()); }
    int total_feature_dim() const;
    void validate() const;  // throws SchemaError on any invariant violation
};

struct StreamConfig {
    int tasks = 5;
    int modalities = 3;
    int train_per_task = 200;
    int eval_per_task = 50;
    std::vector<int> feature_dims;  // defaults to 32 per modality when empty
    double score_min = 0.0;
    double score_max = 25.0;
    int latent_dim = 12;
    double feature_noise = 0.02;
    double drift_rotation = 0.5;  // radians applied to the score direction per task
    double drift_shift = 0.04;    // score offset per task, as a fraction of the range
    double missing_rate = 0.25;
    std::uint64_t seed = 1;

    std::vector<int> resolved_dims() const;
    void validate() const;  // throws ConfigError
};

// Deterministic synthetic curriculum: task features are linear maps of a
// per-sample latent plus noise, and the latent-to-score map rotates and
// shifts from task to task. All samples start fully observed.
TaskStream generate_synthetic_stream(const StreamConfig& cfg);

// Raw per-modality Bernoulli(rate) draws, before the keep-one correction.
std::vector<std::uint8_t> draw_missing_flags(std::mt19937_64& rng, int modalities, double rate);

// Marks modalities missing independently with probability `rate`; if a draw
// would leave a sample with no observed modality, the lowest-index modality
// stays observed. Applies to both splits by default, so evaluation runs
// under the same modality availability the method will face in deployment;
// pass include_eval = false to restrict the pattern to the train split.
TaskStream apply_missing_pattern(TaskStream stream, double rate, std::uint64_t seed,
                                 bool include_eval = true);

void save_stream(const TaskStream& stream, const std::string& path);
TaskStream load_stream(const std::string& path);

// FNV-1a hash over all mask bits in stream order, as a hex string.
std::string mask_hash(const TaskStream& stream);

}  // namespace brima
