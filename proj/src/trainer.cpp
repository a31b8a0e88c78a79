#include "brima/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>

#include "brima/rng.hpp"
#include "json.hpp"
#include "json_write.hpp"

namespace brima {

Variant variant_from_name(const std::string& name) {
    for (Variant v : all_variants()) {
        if (variant_name(v) == name) return v;
    }
    throw ConfigError("unknown variant: " + name);
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::kBrima: return "brima";
        case Variant::kSequential: return "sequential";
        case Variant::kJoint: return "joint";
        case Variant::kZeroImpute: return "zero-impute";
        case Variant::kRetrievalImpute: return "retrieval-impute";
        case Variant::kUniformReplay: return "uniform-replay";
        case Variant::kNoMbi: return "no-mbi";
        case Variant::kNoBridge: return "no-bridge";
        case Variant::kNoCandidate: return "no-candidate";
        case Variant::kNoMro: return "no-mro";
    }
    throw ConfigError("unknown variant enum value");
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> variants = {
        Variant::kBrima,      Variant::kSequential,     Variant::kJoint,
        Variant::kZeroImpute, Variant::kRetrievalImpute, Variant::kUniformReplay,
        Variant::kNoMbi,      Variant::kNoBridge,       Variant::kNoCandidate,
        Variant::kNoMro,
    };
    return variants;
}

VariantTraits traits_for(Variant v) {
    VariantTraits t;
    switch (v) {
        case Variant::kBrima:
            break;
        case Variant::kSequential:
            t.imputation = ImputationMode::kZero;
            t.use_buffer = t.use_replay = t.use_consistency = t.use_reconstruction = false;
            break;
        case Variant::kJoint:
            t.use_buffer = t.use_replay = t.use_consistency = false;
            t.pooled_tasks = true;
            break;
        case Variant::kZeroImpute:
        case Variant::kNoMbi:
            t.imputation = ImputationMode::kZero;
            t.use_reconstruction = false;
            break;
        case Variant::kRetrievalImpute:
        case Variant::kNoBridge:
            t.imputation = ImputationMode::kPriorOnly;
            t.use_reconstruction = false;
            break;
        case Variant::kUniformReplay:
            t.prioritized_sampling = false;
            break;
        case Variant::kNoCandidate:
            t.imputation = ImputationMode::kBridgeNoPrior;
            break;
        case Variant::kNoMro:
            t.use_buffer = t.use_replay = t.use_consistency = false;
            break;
    }
    return t;
}

void TrainerConfig::validate() const {
    if (epochs < 1) throw ConfigError("trainer config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("trainer config: batch_size must be >= 1");
    if (replay_batch < 0) throw ConfigError("trainer config: replay_batch must be >= 0");
    if (learning_rate <= 0.0) throw ConfigError("trainer config: learning_rate must be positive");
    if (lr_floor_fraction < 0.0 || lr_floor_fraction > 1.0) {
        throw ConfigError("trainer config: lr_floor_fraction must lie in [0, 1]");
    }
    if (weight_decay < 0.0) throw ConfigError("trainer config: weight_decay must be >= 0");
    if (retrieval_k < 1) throw ConfigError("trainer config: retrieval_k must be >= 1");
    if (quantile_bins < 1) throw ConfigError("trainer config: quantile_bins must be >= 1");
    if (buffer_capacity < 1) throw ConfigError("trainer config: buffer_capacity must be >= 1");
    if (replay_alpha < 0.0 || replay_alpha > 1.0) {
        throw ConfigError("trainer config: replay_alpha must lie in [0, 1]");
    }
    if (lambda_mem < 0.0 || lambda_rec < 0.0) {
        throw ConfigError("trainer config: loss weights must be >= 0");
    }
    if (simulate_missing_prob < 0.0 || simulate_missing_prob > 1.0) {
        throw ConfigError("trainer config: simulate_missing_prob must lie in [0, 1]");
    }
    if (scorer_hidden < 1 || bridge_hidden < 1 || pool_dim < 1 || condition_dim < 1) {
        throw ConfigError("trainer config: layer dims must be positive");
    }
}

std::string trainer_config_json(const TrainerConfig& cfg) {
    std::string out;
    out += "{\"variant\":\"" + variant_name(cfg.variant) + "\"";
    out += ",\"seed\":" + std::to_string(cfg.seed);
    out += ",\"epochs\":" + std::to_string(cfg.epochs);
    out += ",\"batch_size\":" + std::to_string(cfg.batch_size);
    out += ",\"replay_batch\":" + std::to_string(cfg.replay_batch);
    out += ",\"learning_rate\":";
    jsonw::number(out, cfg.learning_rate);
    out += ",\"lr_floor_fraction\":";
    jsonw::number(out, cfg.lr_floor_fraction);
    out += ",\"weight_decay\":";
    jsonw::number(out, cfg.weight_decay);
    out += ",\"retrieval_k\":" + std::to_string(cfg.retrieval_k);
    out += ",\"quantile_bins\":" + std::to_string(cfg.quantile_bins);
    out += ",\"buffer_capacity\":" + std::to_string(cfg.buffer_capacity);
    out += ",\"replay_alpha\":";
    jsonw::number(out, cfg.replay_alpha);
    out += ",\"lambda_mem\":";
    jsonw::number(out, cfg.lambda_mem);
    out += ",\"lambda_rec\":";
    jsonw::number(out, cfg.lambda_rec);
    out += ",\"simulate_missing_prob\":";
    jsonw::number(out, cfg.simulate_missing_prob);
    out += ",\"scorer_hidden\":" + std::to_string(cfg.scorer_hidden);
    out += ",\"bridge_hidden\":" + std::to_string(cfg.bridge_hidden);
    out += ",\"pool_dim\":" + std::to_string(cfg.pool_dim);
    out += ",\"condition_dim\":" + std::to_string(cfg.condition_dim);
    out += "}";
    return out;
}

std::string trainer_config_hash(const TrainerConfig& cfg) {
    const std::string text = trainer_config_json(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ModelState init_model_state(const TrainerConfig& cfg, const TaskStream& stream) {
    auto rng = make_rng(cfg.seed, rng_stream::kInit);
    ModelState state;
    state.model.scorer = make_perceptron({stream.total_feature_dim(), cfg.scorer_hidden, 1},
                                         Activation::kRectifier, rng);
    state.bridge = make_bridge(stream.feature_dims, cfg.condition_dim, cfg.bridge_hidden,
                               Activation::kRectifier, rng);
    state.pool = make_pool(stream.modality_count, cfg.pool_dim, cfg.condition_dim, rng);
    return state;
}

Gradients Gradients::zeros_like(const ModelState& state) {
    Gradients g;
    g.scorer = PerceptronGrads::zeros_like(state.model.scorer);
    g.bridges.reserve(state.bridge.nets.size());
    for (const PerceptronParams& net : state.bridge.nets) {
        g.bridges.push_back(PerceptronGrads::zeros_like(net));
    }
    g.pool = PoolGrads::zeros_like(state.pool);
    return g;
}

void Gradients::zero() {
    scorer.zero();
    for (PerceptronGrads& b : bridges) b.zero();
    pool.zero();
}

std::vector<ParamBlock> collect_param_blocks(ModelState& state, Gradients& grads) {
    std::vector<ParamBlock> blocks;
    collect_blocks("scorer", state.model.scorer, grads.scorer, blocks);
    for (std::size_t m = 0; m < state.bridge.nets.size(); ++m) {
        collect_blocks("bridge" + std::to_string(m), state.bridge.nets[m], grads.bridges[m], blocks);
    }
    collect_blocks("conditioner", state.pool.conditioner, grads.pool.conditioner, blocks);
    for (std::size_t m = 0; m < state.pool.embeddings.size(); ++m) {
        blocks.push_back({"pool" + std::to_string(m), state.pool.embeddings[m].data(),
                          grads.pool.embeddings[m].data(), state.pool.embeddings[m].size()});
    }
    return blocks;
}

namespace {

std::vector<int> model_feature_dims(const ModelState& state) {
    std::vector<int> dims;
    dims.reserve(state.bridge.nets.size());
    for (const PerceptronParams& net : state.bridge.nets) dims.push_back(net.output_dim());
    return dims;
}

int usable_buffer_entries(const MemoryBuffer& buffer, long exclude_order) {
    int count = 0;
    for (const MemoryEntry& e : buffer.entries) {
        if (e.insertion_order != exclude_order) ++count;
    }
    return count;
}

Vector entry_concat(const MemoryEntry& entry) {
    std::vector<const Vector*> slots;
    slots.reserve(entry.sample.features.size());
    for (const Vector& f : entry.sample.features) slots.push_back(&f);
    return concat_slots(slots);
}

}  // namespace

Vector impute_feature(const ModelState& state, const MemoryBuffer& buffer,
                      const std::vector<Vector>& features, const std::vector<std::uint8_t>& mask,
                      int modality, const TrainerConfig& cfg, ImputationMode mode,
                      long exclude_order) {
    const auto dims = model_feature_dims(state);
    const int dim = dims[static_cast<std::size_t>(modality)];
    if (mode == ImputationMode::kZero) {
        return Vector(static_cast<std::size_t>(dim), 0.0);
    }
    // Cold-start fallback: with no exemplars banked yet, every MBI mode
    // imputes the zero vector.
    if (usable_buffer_entries(buffer, exclude_order) == 0) {
        return Vector(static_cast<std::size_t>(dim), 0.0);
    }
    if (mode == ImputationMode::kBridgeNoPrior) {
        const Vector prior(static_cast<std::size_t>(dim), 0.0);
        const Vector summary = observed_summary(features, mask, dims);
        const Vector condition = make_condition(state.pool, mask, modality);
        return bridge_impute(summary, prior, condition, state.bridge, modality);
    }
    const RetrievalResult retrieval =
        retrieve_candidates(features, mask, buffer, modality, cfg.retrieval_k, exclude_order);
    Vector prior = exemplar_prior(retrieval);
    if (mode == ImputationMode::kPriorOnly) return prior;
    const Vector summary = observed_summary(features, mask, dims);
    const Vector condition = make_condition(state.pool, mask, modality);
    return bridge_impute(summary, prior, condition, state.bridge, modality);
}

StepLosses accumulate_objective(ModelState& state, const MemoryBuffer& buffer,
                                const StepInputs& inputs, const TrainerConfig& cfg,
                                const VariantTraits& traits, Gradients* grads) {
    StepLosses out;
    const std::size_t n_score = inputs.batch.size();
    if (n_score == 0 && inputs.replay.empty()) return out;
    const auto dims = model_feature_dims(state);
    const ScoringModel* snapshot = state.snapshot.has_value() ? &state.snapshot.value() : nullptr;

    // Forward over current items.
    std::vector<ForwardCache> batch_caches(grads ? inputs.batch.size() : 0);
    Vector batch_residuals(inputs.batch.size(), 0.0);
    double score_sum = 0.0;
    for (std::size_t i = 0; i < inputs.batch.size(); ++i) {
        const auto& item = inputs.batch[i];
        std::vector<const Vector*> slots;
        slots.reserve(item.resolved.size());
        for (const Vector& f : item.resolved) slots.push_back(&f);
        const Vector x = concat_slots(slots);
        const double pred = predict_concat(state.model, x, grads ? &batch_caches[i] : nullptr);
        batch_residuals[i] = pred - item.target;
        score_sum += batch_residuals[i] * batch_residuals[i];
    }

    // Reconstruction paths on simulated-missing slots.
    struct RecSlot {
        std::size_t item = 0;
        int modality = 0;
        Vector diff;
        ForwardCache bridge_cache;
        ForwardCache condition_cache;
    };
    std::vector<RecSlot> rec_slots;
    double rec_sum = 0.0;
    const bool bridge_mode = traits.imputation == ImputationMode::kBridged ||
                             traits.imputation == ImputationMode::kBridgeNoPrior;
    if (traits.use_reconstruction && bridge_mode) {
        for (std::size_t i = 0; i < inputs.batch.size(); ++i) {
            const auto& item = inputs.batch[i];
            const int m = item.simulated_modality;
            if (m < 0) continue;
            if (buffer.empty()) continue;  // cold start, no reconstruction signal yet
            std::vector<std::uint8_t> sim_mask(dims.size(), 0);
            sim_mask[static_cast<std::size_t>(m)] = 1;

            Vector prior;
            if (traits.imputation == ImputationMode::kBridged) {
                const RetrievalResult retrieval =
                    retrieve_candidates(item.resolved, sim_mask, buffer, m, cfg.retrieval_k);
                prior = exemplar_prior(retrieval);
            } else {
                prior.assign(static_cast<std::size_t>(dims[static_cast<std::size_t>(m)]), 0.0);
            }
            RecSlot slot;
            slot.item = i;
            slot.modality = m;
            const Vector summary = observed_summary(item.resolved, sim_mask, dims);
            const Vector condition =
                make_condition(state.pool, sim_mask, m, grads ? &slot.condition_cache : nullptr);
            const Vector imputed = bridge_impute(summary, prior, condition, state.bridge, m,
                                                 grads ? &slot.bridge_cache : nullptr);
            const Vector& truth = item.resolved[static_cast<std::size_t>(m)];
            slot.diff.resize(imputed.size());
            double sq = 0.0;
            for (std::size_t j = 0; j < imputed.size(); ++j) {
                slot.diff[j] = imputed[j] - truth[j];
                sq += slot.diff[j] * slot.diff[j];
            }
            rec_sum += sq;
            rec_slots.push_back(std::move(slot));
        }
    }

    // Replay items regularize against the frozen snapshot.
    std::vector<ForwardCache> replay_caches(grads ? inputs.replay.size() : 0);
    Vector replay_drifts(inputs.replay.size(), 0.0);
    double mem_sum = 0.0;
    const bool with_consistency = traits.use_consistency && snapshot != nullptr;
    for (std::size_t j = 0; j < inputs.replay.size(); ++j) {
        const Vector x = entry_concat(*inputs.replay[j]);
        const double pred = predict_concat(state.model, x, grads ? &replay_caches[j] : nullptr);
        if (with_consistency) {
            replay_drifts[j] = pred - predict_concat(*snapshot, x);
            mem_sum += replay_drifts[j] * replay_drifts[j];
        }
    }

    out.score = n_score > 0 ? score_sum / static_cast<double>(n_score) : 0.0;
    out.memory = (with_consistency && !inputs.replay.empty())
                     ? mem_sum / static_cast<double>(inputs.replay.size())
                     : 0.0;
    out.reconstruction = rec_slots.empty() ? 0.0 : rec_sum / static_cast<double>(rec_slots.size());
    out.reconstruction_slots = static_cast<int>(rec_slots.size());
    out.objective = total_objective(out.score, out.memory, out.reconstruction,
                                    {cfg.lambda_mem, cfg.lambda_rec});

    if (grads) {
        for (std::size_t i = 0; i < inputs.batch.size(); ++i) {
            const Vector upstream{2.0 * batch_residuals[i] / static_cast<double>(n_score)};
            perceptron_backward(state.model.scorer, batch_caches[i], upstream, grads->scorer);
        }
        const double rec_scale =
            rec_slots.empty() ? 0.0 : cfg.lambda_rec / static_cast<double>(rec_slots.size());
        for (RecSlot& slot : rec_slots) {
            Vector upstream(slot.diff.size());
            for (std::size_t j = 0; j < slot.diff.size(); ++j) {
                upstream[j] = 2.0 * rec_scale * slot.diff[j];
            }
            const PerceptronParams& net = state.bridge.nets[static_cast<std::size_t>(slot.modality)];
            const Vector input_grad =
                perceptron_backward(net, slot.bridge_cache, upstream,
                                    grads->bridges[static_cast<std::size_t>(slot.modality)]);
            // Only the conditioning slice of the bridge input carries gradient.
            Vector condition_grad(static_cast<std::size_t>(cfg.condition_dim), 0.0);
            const std::size_t offset = input_grad.size() - condition_grad.size();
            for (std::size_t j = 0; j < condition_grad.size(); ++j) {
                condition_grad[j] = input_grad[offset + j];
            }
            condition_backward(state.pool, slot.modality, slot.condition_cache, condition_grad,
                               grads->pool);
        }
        if (with_consistency) {
            for (std::size_t j = 0; j < inputs.replay.size(); ++j) {
                const Vector upstream{cfg.lambda_mem * 2.0 * replay_drifts[j] /
                                      static_cast<double>(inputs.replay.size())};
                perceptron_backward(state.model.scorer, replay_caches[j], upstream, grads->scorer);
            }
        }
    }
    return out;
}

namespace {

TaskScoreStats compute_stats(const std::vector<MultiModalSample>& samples) {
    TaskScoreStats stats;
    if (samples.empty()) return stats;
    double acc = 0.0;
    for (const auto& s : samples) acc += s.score;
    stats.mean = acc / static_cast<double>(samples.size());
    double var = 0.0;
    for (const auto& s : samples) {
        const double d = s.score - stats.mean;
        var += d * d;
    }
    var /= static_cast<double>(samples.size());
    stats.stddev = var > 1e-24 ? std::sqrt(var) : 1.0;
    return stats;
}

std::vector<std::uint8_t> snapshot_image(const std::optional<ScoringModel>& snapshot) {
    std::vector<std::uint8_t> bytes;
    if (!snapshot.has_value()) return bytes;
    for (const Layer& layer : snapshot->scorer.layers) {
        const auto* w = reinterpret_cast<const std::uint8_t*>(layer.weight.data.data());
        bytes.insert(bytes.end(), w, w + layer.weight.data.size() * sizeof(double));
        const auto* b = reinterpret_cast<const std::uint8_t*>(layer.bias.data());
        bytes.insert(bytes.end(), b, b + layer.bias.size() * sizeof(double));
    }
    return bytes;
}

// One simulated-missing slot per entry, cycling the modality index with the
// epoch so every modality gets covered; the entry itself is excluded from
// its own retrieval pool.
void refresh_priorities(TrainerState& state, const TrainerConfig& cfg, const VariantTraits& traits,
                        int epoch) {
    if (state.buffer.empty()) return;
    const auto dims = model_feature_dims(state.model);
    const int modalities = static_cast<int>(dims.size());
    const ScoringModel* snapshot =
        state.model.snapshot.has_value() ? &state.model.snapshot.value() : nullptr;
    for (int i = 0; i < state.buffer.size(); ++i) {
        MemoryEntry& entry = state.buffer.entries[static_cast<std::size_t>(i)];
        const int sim_m = (epoch + i) % modalities;
        std::vector<std::uint8_t> sim_mask(static_cast<std::size_t>(modalities), 0);
        sim_mask[static_cast<std::size_t>(sim_m)] = 1;
        const Vector imputed =
            impute_feature(state.model, state.buffer, entry.sample.features, sim_mask, sim_m, cfg,
                           traits.imputation, entry.insertion_order);
        entry.distortion =
            modality_distortion(imputed, entry.sample.features[static_cast<std::size_t>(sim_m)]);
        entry.drift = score_drift(state.model.model, snapshot, entry);
        entry.priority = replay_priority(entry.distortion, entry.drift, cfg.replay_alpha);
    }
}

double standardize(double score, const TaskScoreStats& stats) {
    return (score - stats.mean) / stats.stddev;
}

double destandardize(double value, const TaskScoreStats& stats) {
    return value * stats.stddev + stats.mean;
}

void run_session_internal(TrainerState& state, const std::vector<const MultiModalSample*>& train,
                          const TrainerConfig& cfg, const VariantTraits& traits, int session) {
    if (train.empty()) throw ContractError("train_session: no training samples");
    const auto dims = model_feature_dims(state.model);
    const int modalities = static_cast<int>(dims.size());

    // Stage 1: impute missing features once per session; they stay fixed
    // through the epoch loop.
    std::vector<std::vector<Vector>> resolved(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        const MultiModalSample& s = *train[i];
        resolved[i].resize(static_cast<std::size_t>(modalities));
        for (int m = 0; m < modalities; ++m) {
            if (s.missing[static_cast<std::size_t>(m)]) {
                resolved[i][static_cast<std::size_t>(m)] = impute_feature(
                    state.model, state.buffer, s.features, s.missing, m, cfg, traits.imputation);
            } else {
                resolved[i][static_cast<std::size_t>(m)] = s.features[static_cast<std::size_t>(m)];
            }
        }
    }

    const std::vector<std::uint8_t> frozen_before = snapshot_image(state.model.snapshot);
    const bool bridge_mode = traits.imputation == ImputationMode::kBridged ||
                             traits.imputation == ImputationMode::kBridgeNoPrior;

    // Stage 2: epoch loop with per-epoch priority refresh and replay batch.
    std::vector<ParamBlock> blocks = collect_param_blocks(state.model, state.grads);
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        state.optimizer.learning_rate =
            cosine_lr(cfg.learning_rate, cfg.lr_floor_fraction, epoch, cfg.epochs);
        if (traits.use_buffer && !state.buffer.empty()) {
            refresh_priorities(state, cfg, traits, epoch);
        }
        const bool with_replay =
            traits.use_replay && cfg.replay_batch > 0 && !state.buffer.empty();

        auto shuffle_rng = make_rng(cfg.seed, rng_stream::kShuffle,
                                    static_cast<std::uint64_t>(session),
                                    static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        auto sim_rng = make_rng(cfg.seed, rng_stream::kSimulate,
                                static_cast<std::uint64_t>(session),
                                static_cast<std::uint64_t>(epoch));
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        std::uniform_int_distribution<int> pick_modality(0, modalities - 1);

        int step_in_epoch = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            StepInputs inputs;
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            for (std::size_t pos = start; pos < stop; ++pos) {
                const int idx = order[pos];
                StepInputs::Item item;
                item.sample = train[static_cast<std::size_t>(idx)];
                item.resolved = resolved[static_cast<std::size_t>(idx)];
                item.target = standardize(item.sample->score,
                                          state.stats[static_cast<std::size_t>(item.sample->task_index)]);
                if (traits.use_reconstruction && bridge_mode && item.sample->is_complete()) {
                    if (uni(sim_rng) < cfg.simulate_missing_prob) {
                        item.simulated_modality = pick_modality(sim_rng);
                    }
                }
                inputs.batch.push_back(std::move(item));
            }
            if (with_replay) {
                const std::uint64_t replay_seed = mix_seed(
                    mix_seed(mix_seed(mix_seed(cfg.seed, rng_stream::kReplay),
                                      static_cast<std::uint64_t>(session)),
                             static_cast<std::uint64_t>(epoch)),
                    static_cast<std::uint64_t>(step_in_epoch));
                const std::vector<int> replay_idx =
                    traits.prioritized_sampling
                        ? sample_replay(state.buffer, cfg.replay_batch, replay_seed)
                        : sample_uniform(state.buffer, cfg.replay_batch, replay_seed);
                for (int ridx : replay_idx) {
                    inputs.replay.push_back(&state.buffer.entries[static_cast<std::size_t>(ridx)]);
                }
            }
            state.grads.zero();
            accumulate_objective(state.model, state.buffer, inputs, cfg, traits, &state.grads);
            adam_step(state.optimizer, blocks);
            ++step_in_epoch;
        }
    }

    // The frozen snapshot must not have moved during optimization.
    if (snapshot_image(state.model.snapshot) != frozen_before) {
        throw ContractError("train_session: snapshot parameters were modified during training");
    }

    // Stage 3: snapshot the scorer, then refresh the memory.
    state.model.snapshot = state.model.model;
    if (traits.use_buffer) {
        std::vector<MultiModalSample> pool_samples;
        pool_samples.reserve(train.size());
        Vector predictions(train.size(), 0.0);
        for (std::size_t i = 0; i < train.size(); ++i) {
            std::vector<const Vector*> slots;
            slots.reserve(resolved[i].size());
            for (const Vector& f : resolved[i]) slots.push_back(&f);
            const double pred = predict_concat(state.model.model, concat_slots(slots));
            predictions[i] = destandardize(
                pred, state.stats[static_cast<std::size_t>(train[i]->task_index)]);
            pool_samples.push_back(*train[i]);
        }
        const int contribution = (cfg.buffer_capacity + session - 1) / session;
        const std::uint64_t select_seed = mix_seed(
            mix_seed(cfg.seed, rng_stream::kSelect), static_cast<std::uint64_t>(session));
        state.last_selection = SelectionDiagnostics{};
        state.last_selection_capacity = contribution;
        MemoryBuffer fresh = select_memory(pool_samples, predictions, cfg.quantile_bins,
                                           contribution, select_seed, &state.last_selection);
        merge_memory(state.buffer, std::move(fresh), session, cfg.buffer_capacity);
    }
    state.session = session;
}

}  // namespace

void train_session(TrainerState& state, const TaskStream& stream, int task_index,
                   const TrainerConfig& cfg) {
    if (task_index < 0 || task_index >= stream.task_count()) {
        throw ContractError("train_session: task index out of range");
    }
    if (task_index != state.session) {
        throw ContractError("train_session: expected session for task " +
                            std::to_string(state.session) + ", got " + std::to_string(task_index));
    }
    const VariantTraits traits = traits_for(cfg.variant);
    if (traits.pooled_tasks) {
        throw ContractError("train_session: pooled variants train through run_stream");
    }
    if (state.stats.size() != static_cast<std::size_t>(stream.task_count())) {
        state.stats.resize(static_cast<std::size_t>(stream.task_count()));
    }
    state.stats[static_cast<std::size_t>(task_index)] =
        compute_stats(stream.tasks[static_cast<std::size_t>(task_index)].train);
    std::vector<const MultiModalSample*> train;
    for (const MultiModalSample& s : stream.tasks[static_cast<std::size_t>(task_index)].train) {
        train.push_back(&s);
    }
    run_session_internal(state, train, cfg, traits, task_index + 1);
}

namespace {

CellMetrics evaluate_samples(TrainerState& state, const std::vector<const MultiModalSample*>& samples,
                             const TrainerConfig& cfg, const VariantTraits& traits) {
    Vector truth, predicted;
    truth.reserve(samples.size());
    predicted.reserve(samples.size());
    for (const MultiModalSample* s : samples) {
        std::vector<Vector> imputed_slots;
        for (std::size_t m = 0; m < s->features.size(); ++m) {
            if (s->missing[m]) {
                imputed_slots.push_back(impute_feature(state.model, state.buffer, s->features,
                                                       s->missing, static_cast<int>(m), cfg,
                                                       traits.imputation));
            }
        }
        std::vector<const Vector*> slots(s->features.size(), nullptr);
        std::size_t next = 0;
        for (std::size_t m = 0; m < s->features.size(); ++m) {
            slots[m] = s->missing[m] ? &imputed_slots[next++] : &s->features[m];
        }
        const double pred = predict_concat(state.model.model, concat_slots(slots));
        predicted.push_back(
            destandardize(pred, state.stats[static_cast<std::size_t>(s->task_index)]));
        truth.push_back(s->score);
    }
    CellMetrics cell;
    cell.srcc = srcc(truth, predicted);
    cell.mse = mse(truth, predicted);
    cell.rl2 = rl2(truth, predicted);
    return cell;
}

void finalize_report(SessionReport& report) {
    // Final-session row aggregates.
    const auto& last = report.cells.back();
    Vector srccs;
    double mse_acc = 0.0, rl2_acc = 0.0;
    int defined = 0;
    for (const auto& cell : last) {
        if (!cell.has_value()) continue;
        ++defined;
        mse_acc += cell->mse;
        rl2_acc += cell->rl2;
        if (cell->srcc.has_value()) srccs.push_back(*cell->srcc);
    }
    if (!srccs.empty()) {
        const FisherResult f = fisher_z_average(srccs);
        report.final_srcc_fisher = f.value;
        report.fisher_clamped = report.fisher_clamped || f.clamped;
    }
    if (defined > 0) {
        report.final_mse = mse_acc / defined;
        report.final_rl2 = rl2_acc / defined;
    }

    Vector session_srccs;
    double smse = 0.0, srl2 = 0.0;
    for (const auto& cell : report.session_metrics) {
        if (cell.srcc.has_value()) session_srccs.push_back(*cell.srcc);
        smse += cell.mse;
        srl2 += cell.rl2;
    }
    if (!session_srccs.empty()) {
        const FisherResult f = fisher_z_average(session_srccs);
        report.session_avg_srcc_fisher = f.value;
        report.fisher_clamped = report.fisher_clamped || f.clamped;
    }
    if (!report.session_metrics.empty()) {
        report.session_avg_mse = smse / static_cast<double>(report.session_metrics.size());
        report.session_avg_rl2 = srl2 / static_cast<double>(report.session_metrics.size());
    }

    std::vector<std::vector<std::optional<double>>> srcc_matrix;
    srcc_matrix.reserve(report.cells.size());
    for (const auto& row : report.cells) {
        std::vector<std::optional<double>> r;
        r.reserve(row.size());
        for (const auto& cell : row) {
            r.push_back(cell.has_value() ? cell->srcc : std::nullopt);
        }
        srcc_matrix.push_back(std::move(r));
    }
    const ForgettingSummary forgetting = forgetting_from_matrix(srcc_matrix);
    report.average_forgetting = forgetting.average;
    report.per_task_forgetting = forgetting.per_task;
}

}  // namespace

SessionReport run_stream(const TaskStream& stream, const TrainerConfig& cfg,
                         const SessionObserver& observer) {
    cfg.validate();
    stream.validate();
    const VariantTraits traits = traits_for(cfg.variant);
    const int tasks = stream.task_count();

    TrainerState state;
    state.model = init_model_state(cfg, stream);
    state.grads = Gradients::zeros_like(state.model);
    state.optimizer.learning_rate = cfg.learning_rate;
    state.optimizer.weight_decay = cfg.weight_decay;
    state.buffer.capacity = cfg.buffer_capacity;
    state.stats.resize(static_cast<std::size_t>(tasks));

    SessionReport report;
    report.variant = variant_name(cfg.variant);
    report.seed = cfg.seed;
    report.config_hash = trainer_config_hash(cfg);
    report.mask_hash = mask_hash(stream);
    report.tasks = tasks;
    report.sessions = traits.pooled_tasks ? 1 : tasks;
    report.cells.assign(static_cast<std::size_t>(report.sessions),
                        std::vector<std::optional<CellMetrics>>(static_cast<std::size_t>(tasks)));

    auto eval_after_session = [&](int session, int seen_tasks) {
        std::vector<const MultiModalSample*> all_eval;
        for (int k = 0; k < seen_tasks; ++k) {
            std::vector<const MultiModalSample*> task_eval;
            for (const MultiModalSample& s : stream.tasks[static_cast<std::size_t>(k)].eval) {
                task_eval.push_back(&s);
                all_eval.push_back(&s);
            }
            report.cells[static_cast<std::size_t>(session - 1)][static_cast<std::size_t>(k)] =
                evaluate_samples(state, task_eval, cfg, traits);
        }
        report.session_metrics.push_back(evaluate_samples(state, all_eval, cfg, traits));
    };

    if (traits.pooled_tasks) {
        std::vector<const MultiModalSample*> pooled;
        for (int t = 0; t < tasks; ++t) {
            state.stats[static_cast<std::size_t>(t)] =
                compute_stats(stream.tasks[static_cast<std::size_t>(t)].train);
            for (const MultiModalSample& s : stream.tasks[static_cast<std::size_t>(t)].train) {
                pooled.push_back(&s);
            }
        }
        run_session_internal(state, pooled, cfg, traits, 1);
        eval_after_session(1, tasks);
        if (observer) observer(state, 1);
    } else {
        for (int t = 0; t < tasks; ++t) {
            train_session(state, stream, t, cfg);
            eval_after_session(t + 1, t + 1);
            if (observer) observer(state, t + 1);
        }
    }
    finalize_report(report);
    return report;
}

AblationResult run_ablation_grid(const TaskStream& stream, const TrainerConfig& base,
                                 const std::vector<Variant>& variants,
                                 const std::vector<std::uint64_t>& seeds, int jobs) {
    if (variants.empty()) throw ConfigError("run_ablation_grid: no variants given");
    if (seeds.empty()) throw ConfigError("run_ablation_grid: no seeds given");

    struct Job {
        Variant variant;
        std::uint64_t seed;
    };
    std::vector<Job> grid;
    grid.reserve(variants.size() * seeds.size());
    for (Variant v : variants) {
        for (std::uint64_t s : seeds) grid.push_back({v, s});
    }

    AblationResult result;
    result.runs.resize(grid.size());
    auto run_one = [&](std::size_t i) {
        TrainerConfig cfg = base;
        cfg.variant = grid[i].variant;
        cfg.seed = grid[i].seed;
        result.runs[i] = run_stream(stream, cfg);
    };
    if (jobs <= 1) {
        for (std::size_t i = 0; i < grid.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next.fetch_add(1); i < grid.size(); i = next.fetch_add(1)) {
                run_one(i);
            }
        };
        std::vector<std::thread> threads;
        const int n = std::min<int>(jobs, static_cast<int>(grid.size()));
        threads.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) threads.emplace_back(worker);
        for (std::thread& th : threads) th.join();
    }

    // Aggregate per variant across seeds, in the given variant order.
    for (std::size_t v = 0; v < variants.size(); ++v) {
        AggregateRow row;
        row.variant = variant_name(variants[v]);
        Vector srccs, mses, rl2s, forgets;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const SessionReport& run = result.runs[v * seeds.size() + s];
            if (run.final_srcc_fisher.has_value()) srccs.push_back(*run.final_srcc_fisher);
            mses.push_back(run.final_mse);
            rl2s.push_back(run.final_rl2);
            forgets.push_back(run.average_forgetting);
        }
        auto mean_std = [](const Vector& xs) {
            if (xs.empty()) return std::pair<double, double>{0.0, 0.0};
            double mean = 0.0;
            for (double x : xs) mean += x;
            mean /= static_cast<double>(xs.size());
            double var = 0.0;
            for (double x : xs) var += (x - mean) * (x - mean);
            const double std_dev =
                xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
            return std::pair<double, double>{mean, std_dev};
        };
        row.runs = static_cast<int>(seeds.size());
        std::tie(row.srcc_mean, row.srcc_stddev) = mean_std(srccs);
        std::tie(row.mse_mean, row.mse_stddev) = mean_std(mses);
        std::tie(row.rl2_mean, row.rl2_stddev) = mean_std(rl2s);
        std::tie(row.forgetting_mean, row.forgetting_stddev) = mean_std(forgets);
        result.table.push_back(std::move(row));
    }
    return result;
}

namespace {

void append_perceptron_meta(std::string& out, const PerceptronParams& p) {
    out += "{\"dims\":[" + std::to_string(p.input_dim());
    for (const Layer& l : p.layers) out += ',' + std::to_string(l.weight.rows);
    out += "],\"activations\":[";
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        if (k) out += ',';
        out += '"' + activation_name(p.layers[k].activation) + '"';
    }
    out += "]}";
}

void append_block_line(std::string& out, const std::string& name, const double* values,
                       std::size_t size) {
    out += "{\"name\":";
    jsonw::string(out, name);
    out += ",\"values\":[";
    for (std::size_t i = 0; i < size; ++i) {
        if (i) out += ',';
        jsonw::number(out, values[i]);
    }
    out += "]}\n";
}

void append_perceptron_blocks(std::string& out, const std::string& prefix,
                              const PerceptronParams& p) {
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        append_block_line(out, prefix + ".layer" + std::to_string(k) + ".weight",
                          p.layers[k].weight.data.data(), p.layers[k].weight.data.size());
        append_block_line(out, prefix + ".layer" + std::to_string(k) + ".bias",
                          p.layers[k].bias.data(), p.layers[k].bias.size());
    }
}

PerceptronParams perceptron_from_meta(const nlohmann::json& meta) {
    const auto dims = meta.at("dims").get<std::vector<int>>();
    const auto acts = meta.at("activations").get<std::vector<std::string>>();
    if (dims.size() < 2 || acts.size() + 1 != dims.size()) {
        throw SchemaError("checkpoint: inconsistent perceptron metadata");
    }
    PerceptronParams p;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        Layer layer;
        layer.weight = DenseMatrix(dims[k + 1], dims[k]);
        layer.bias.assign(static_cast<std::size_t>(dims[k + 1]), 0.0);
        layer.activation = activation_from_name(acts[k]);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

void fill_perceptron_block(PerceptronParams& p, const std::string& suffix, const Vector& values) {
    // suffix looks like "layerK.weight" or "layerK.bias"
    if (suffix.rfind("layer", 0) != 0) throw SchemaError("checkpoint: bad block name " + suffix);
    const std::size_t dot = suffix.find('.');
    if (dot == std::string::npos) throw SchemaError("checkpoint: bad block name " + suffix);
    const int layer = std::stoi(suffix.substr(5, dot - 5));
    if (layer < 0 || layer >= static_cast<int>(p.layers.size())) {
        throw SchemaError("checkpoint: layer index out of range in " + suffix);
    }
    const std::string kind = suffix.substr(dot + 1);
    Vector* target = nullptr;
    if (kind == "weight") {
        target = &p.layers[static_cast<std::size_t>(layer)].weight.data;
    } else if (kind == "bias") {
        target = &p.layers[static_cast<std::size_t>(layer)].bias;
    } else {
        throw SchemaError("checkpoint: unknown block kind in " + suffix);
    }
    if (target->size() != values.size()) {
        throw SchemaError("checkpoint: block " + suffix + " has wrong length");
    }
    *target = values;
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& path) {
    std::string out;
    out += "{\"format\":\"brima-checkpoint\",\"version\":1,\"meta\":{\"scorer\":";
    append_perceptron_meta(out, state.model.scorer);
    out += ",\"bridges\":[";
    for (std::size_t m = 0; m < state.bridge.nets.size(); ++m) {
        if (m) out += ',';
        append_perceptron_meta(out, state.bridge.nets[m]);
    }
    out += "],\"conditioner\":";
    append_perceptron_meta(out, state.pool.conditioner);
    out += ",\"pool\":{\"modalities\":" + std::to_string(state.pool.embeddings.size()) +
           ",\"dim\":" +
           std::to_string(state.pool.embeddings.empty() ? 0 : state.pool.embeddings[0].size()) + "}";
    out += ",\"has_snapshot\":";
    out += state.snapshot.has_value() ? "true" : "false";
    out += "}}\n";

    append_perceptron_blocks(out, "scorer", state.model.scorer);
    for (std::size_t m = 0; m < state.bridge.nets.size(); ++m) {
        append_perceptron_blocks(out, "bridge" + std::to_string(m), state.bridge.nets[m]);
    }
    append_perceptron_blocks(out, "conditioner", state.pool.conditioner);
    for (std::size_t m = 0; m < state.pool.embeddings.size(); ++m) {
        append_block_line(out, "pool" + std::to_string(m), state.pool.embeddings[m].data(),
                          state.pool.embeddings[m].size());
    }
    if (state.snapshot.has_value()) {
        append_perceptron_blocks(out, "snapshot", state.snapshot->scorer);
    }

    std::ofstream file(path, std::ios::binary);
    if (!file) throw ParseError("save_checkpoint: cannot open " + path + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw ParseError("save_checkpoint: write to " + path + " failed");
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ParseError("load_checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(file, line)) throw ParseError("load_checkpoint: empty file");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
        throw ParseError(std::string("load_checkpoint: bad header: ") + e.what());
    }
    if (header.value("format", "") != "brima-checkpoint" || header.value("version", 0) != 1) {
        throw SchemaError("load_checkpoint: not a version-1 brima checkpoint");
    }

    ModelState state;
    bool has_snapshot = false;
    try {
        const auto& meta = header.at("meta");
        state.model.scorer = perceptron_from_meta(meta.at("scorer"));
        for (const auto& bm : meta.at("bridges")) {
            state.bridge.nets.push_back(perceptron_from_meta(bm));
        }
        state.pool.conditioner = perceptron_from_meta(meta.at("conditioner"));
        const int pool_m = meta.at("pool").at("modalities").get<int>();
        const int pool_dim = meta.at("pool").at("dim").get<int>();
        state.pool.embeddings.assign(static_cast<std::size_t>(pool_m),
                                     Vector(static_cast<std::size_t>(pool_dim), 0.0));
        has_snapshot = meta.at("has_snapshot").get<bool>();
        if (has_snapshot) {
            ScoringModel snap;
            snap.scorer = perceptron_from_meta(meta.at("scorer"));
            state.snapshot = std::move(snap);
        }
    } catch (const SchemaError&) {
        throw;
    } catch (const std::exception& e) {
        throw SchemaError(std::string("load_checkpoint: malformed meta: ") + e.what());
    }

    long record = 0;
    while (std::getline(file, line)) {
        ++record;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError("load_checkpoint: block " + std::to_string(record) + ": " + e.what());
        }
        std::string name;
        Vector values;
        try {
            name = rec.at("name").get<std::string>();
            values = rec.at("values").get<Vector>();
        } catch (const std::exception& e) {
            throw SchemaError("load_checkpoint: block " + std::to_string(record) + ": " + e.what());
        }
        if (name.rfind("scorer.", 0) == 0) {
            fill_perceptron_block(state.model.scorer, name.substr(7), values);
        } else if (name.rfind("bridge", 0) == 0) {
            const std::size_t dot = name.find('.');
            const int m = std::stoi(name.substr(6, dot - 6));
            if (m < 0 || m >= static_cast<int>(state.bridge.nets.size())) {
                throw SchemaError("load_checkpoint: bridge index out of range in " + name);
            }
            fill_perceptron_block(state.bridge.nets[static_cast<std::size_t>(m)],
                                  name.substr(dot + 1), values);
        } else if (name.rfind("conditioner.", 0) == 0) {
            fill_perceptron_block(state.pool.conditioner, name.substr(12), values);
        } else if (name.rfind("pool", 0) == 0) {
            const int m = std::stoi(name.substr(4));
            if (m < 0 || m >= static_cast<int>(state.pool.embeddings.size())) {
                throw SchemaError("load_checkpoint: pool index out of range in " + name);
            }
            if (state.pool.embeddings[static_cast<std::size_t>(m)].size() != values.size()) {
                throw SchemaError("load_checkpoint: pool block " + name + " has wrong length");
            }
            state.pool.embeddings[static_cast<std::size_t>(m)] = values;
        } else if (name.rfind("snapshot.", 0) == 0) {
            if (!has_snapshot) throw SchemaError("load_checkpoint: unexpected snapshot block");
            fill_perceptron_block(state.snapshot->scorer, name.substr(9), values);
        } else {
            throw SchemaError("load_checkpoint: unknown block " + name);
        }
    }
    return state;
}

}  // namespace brima
