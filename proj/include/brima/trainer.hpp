#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "brima/data.hpp"
#include "brima/mbi.hpp"
#include "brima/model.hpp"
#include "brima/mro.hpp"
#include "brima/report.hpp"

namespace brima {

enum class Variant {
    kBrima,
    kSequential,
    kJoint,
    kZeroImpute,
    kRetrievalImpute,
    kUniformReplay,
    kNoMbi,
    kNoBridge,
    kNoCandidate,
    kNoMro,
};

Variant variant_from_name(const std::string& name);
std::string variant_name(Variant v);
const std::vector<Variant>& all_variants();

enum class ImputationMode { kZero, kPriorOnly, kBridged, kBridgeNoPrior };

// What a method variant enables. Variants with equal traits (e.g. no-mbi
// and zero-impute) produce identical runs under the same seed.
struct VariantTraits {
    ImputationMode imputation = ImputationMode::kBridged;
    bool use_buffer = true;          // memory selection after each session
    bool use_replay = true;          // replay batches in the step loss
    bool use_consistency = true;     // snapshot consistency term
    bool use_reconstruction = true;  // reconstruction term on simulated slots
    bool prioritized_sampling = true;
    bool pooled_tasks = false;       // train once on all tasks (joint)
};

VariantTraits traits_for(Variant v);

struct TrainerConfig {
    Variant variant = Variant::kBrima;
    std::uint64_t seed = 1;
    int epochs = 50;
    int batch_size = 4;
    int replay_batch = 2;
    double learning_rate = 3e-4;
    double lr_floor_fraction = 0.01;  // cosine schedule floor, as a fraction of the initial rate
    double weight_decay = 1e-4;
    int retrieval_k = 5;
    int quantile_bins = 10;  // Q
    int buffer_capacity = 50;
    double replay_alpha = 0.5;
    double lambda_mem = 1.0;
    double lambda_rec = 1.0;
    double simulate_missing_prob = 0.5;
    int scorer_hidden = 256;
    int bridge_hidden = 256;
    int pool_dim = 16;
    int condition_dim = 16;

    void validate() const;  // throws ConfigError
};

// Canonical JSON used for the config hash recorded in reports.
std::string trainer_config_json(const TrainerConfig& cfg);
std::string trainer_config_hash(const TrainerConfig& cfg);

// All learnable state plus the frozen scorer snapshot from the previous
// session. The snapshot never appears in the parameter blocks.
struct ModelState {
    ScoringModel model;
    BridgeNetwork bridge;
    TaskIndicatorPool pool;
    std::optional<ScoringModel> snapshot;
};

ModelState init_model_state(const TrainerConfig& cfg, const TaskStream& stream);

struct Gradients {
    PerceptronGrads scorer;
    std::vector<PerceptronGrads> bridges;
    PoolGrads pool;

    static Gradients zeros_like(const ModelState& state);
    void zero();
};

std::vector<ParamBlock> collect_param_blocks(ModelState& state, Gradients& grads);

struct TaskScoreStats {
    double mean = 0.0;
    double stddev = 1.0;
};

struct TrainerState {
    ModelState model;
    Gradients grads;
    AdamState optimizer;
    MemoryBuffer buffer;
    std::vector<TaskScoreStats> stats;  // one per task once its session ran
    int session = 0;                    // sessions completed
    SelectionDiagnostics last_selection;  // from the most recent memory update
    int last_selection_capacity = 0;      // slots the session was allowed to add
};

// No-gradient imputation of one missing modality under the given mode.
Vector impute_feature(const ModelState& state, const MemoryBuffer& buffer,
                      const std::vector<Vector>& features, const std::vector<std::uint8_t>& mask,
                      int modality, const TrainerConfig& cfg, ImputationMode mode,
                      long exclude_order = -1);

// One fully-resolved optimization step input; assembled with RNG up front
// so that the objective itself is a deterministic function of the state.
struct StepInputs {
    struct Item {
        std::vector<Vector> resolved;  // all modality slots filled
        double target = 0.0;           // standardized score
        int simulated_modality = -1;   // slot to run the reconstruction path on
        const MultiModalSample* sample = nullptr;
    };
    std::vector<Item> batch;
    std::vector<const MemoryEntry*> replay;
};

struct StepLosses {
    double score = 0.0;
    double memory = 0.0;
    double reconstruction = 0.0;
    double objective = 0.0;
    int reconstruction_slots = 0;
};

// Computes the combined objective and, when `grads` is given, accumulates
// its gradients. Score loss runs over the current-task items; the
// consistency term over replay items against the frozen snapshot; the
// reconstruction term over simulated slots with a live bridge path.
StepLosses accumulate_objective(ModelState& state, const MemoryBuffer& buffer,
                                const StepInputs& inputs, const TrainerConfig& cfg,
                                const VariantTraits& traits, Gradients* grads);

// One continual session over task `task_index` (0-based): imputation of the
// task's missing features, the epoch loop with replay and per-epoch
// priority refresh, then snapshotting and memory update.
void train_session(TrainerState& state, const TaskStream& stream, int task_index,
                   const TrainerConfig& cfg);

using SessionObserver = std::function<void(const TrainerState&, int completed_session)>;

SessionReport run_stream(const TaskStream& stream, const TrainerConfig& cfg,
                         const SessionObserver& observer = nullptr);

struct AblationResult {
    std::vector<SessionReport> runs;  // ordered by (variant, seed) as given
    std::vector<AggregateRow> table;  // one row per variant, in the given order
};

AblationResult run_ablation_grid(const TaskStream& stream, const TrainerConfig& base,
                                 const std::vector<Variant>& variants,
                                 const std::vector<std::uint64_t>& seeds, int jobs = 1);

// Versioned checkpoint with one flat array per named block; round-trips
// exactly. Includes the snapshot when present.
void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace brima
