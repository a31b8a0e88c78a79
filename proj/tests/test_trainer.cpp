#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "brima/config.hpp"
#include "brima/rng.hpp"
#include "brima/trainer.hpp"
#include "doctest.h"

using namespace brima;

namespace {

StreamConfig tiny_stream_cfg() {
    StreamConfig cfg;
    cfg.tasks = 3;
    cfg.modalities = 3;
    cfg.train_per_task = 24;
    cfg.eval_per_task = 10;
    cfg.feature_dims = {5, 4, 3};
    cfg.latent_dim = 4;
    cfg.seed = 5;
    return cfg;
}

TrainerConfig tiny_trainer_cfg() {
    TrainerConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.replay_batch = 2;
    cfg.scorer_hidden = 12;
    cfg.bridge_hidden = 10;
    cfg.pool_dim = 4;
    cfg.condition_dim = 4;
    cfg.quantile_bins = 4;
    cfg.buffer_capacity = 12;
    cfg.seed = 1;
    return cfg;
}

bool perceptrons_equal(const PerceptronParams& a, const PerceptronParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
        if (a.layers[k].weight.data != b.layers[k].weight.data) return false;
        if (a.layers[k].bias != b.layers[k].bias) return false;
    }
    return true;
}

// A single-task stream holding task k's data, reindexed to task 0.
TaskStream slice_task(const TaskStream& stream, int k) {
    TaskStream out;
    out.modality_count = stream.modality_count;
    out.feature_dims = stream.feature_dims;
    out.score_min = stream.score_min;
    out.score_max = stream.score_max;
    out.tasks.resize(1);
    out.tasks[0] = stream.tasks[static_cast<std::size_t>(k)];
    for (auto& s : out.tasks[0].train) s.task_index = 0;
    for (auto& s : out.tasks[0].eval) s.task_index = 0;
    return out;
}

}  // namespace

TEST_CASE("session 1: snapshot appears and the memory fills after training") {
    const TaskStream stream =
        apply_missing_pattern(generate_synthetic_stream(tiny_stream_cfg()), 0.25, 3);
    const TrainerConfig cfg = tiny_trainer_cfg();

    TrainerState state;
    state.model = init_model_state(cfg, stream);
    state.grads = Gradients::zeros_like(state.model);
    state.optimizer.weight_decay = cfg.weight_decay;
    state.buffer.capacity = cfg.buffer_capacity;
    CHECK(!state.model.snapshot.has_value());

    train_session(state, stream, 0, cfg);
    CHECK(state.model.snapshot.has_value());
    CHECK(state.buffer.size() > 0);
    CHECK(state.buffer.size() <= cfg.buffer_capacity);
    for (const auto& e : state.buffer.entries) CHECK(e.sample.is_complete());
    CHECK(state.session == 1);

    CHECK_THROWS_AS(train_session(state, stream, 0, cfg), ContractError);
}

TEST_CASE("memory loss is exactly zero without a snapshot") {
    const TaskStream stream = generate_synthetic_stream(tiny_stream_cfg());
    const TrainerConfig cfg = tiny_trainer_cfg();
    ModelState model = init_model_state(cfg, stream);
    MemoryBuffer buffer;

    MemoryEntry entry;
    entry.sample = stream.tasks[0].train[0];
    StepInputs inputs;
    StepInputs::Item item;
    item.sample = &stream.tasks[0].train[1];
    item.resolved = stream.tasks[0].train[1].features;
    item.target = 0.5;
    inputs.batch.push_back(item);
    inputs.replay.push_back(&entry);

    const StepLosses losses =
        accumulate_objective(model, buffer, inputs, cfg, traits_for(Variant::kBrima), nullptr);
    CHECK(losses.memory == 0.0);
    CHECK(losses.score > 0.0);
}

TEST_CASE("snapshot parameters stay bitwise frozen through optimization steps") {
    const TaskStream stream = generate_synthetic_stream(tiny_stream_cfg());
    const TrainerConfig cfg = tiny_trainer_cfg();
    ModelState model = init_model_state(cfg, stream);
    model.snapshot = model.model;
    const ScoringModel frozen = *model.snapshot;

    Gradients grads = Gradients::zeros_like(model);
    auto blocks = collect_param_blocks(model, grads);
    AdamState opt;
    opt.learning_rate = 0.01;

    MemoryBuffer buffer;
    MemoryEntry entry;
    entry.sample = stream.tasks[0].train[0];
    entry.insertion_order = buffer.next_insertion_order++;
    buffer.entries.push_back(entry);

    StepInputs inputs;
    StepInputs::Item item;
    item.sample = &stream.tasks[0].train[1];
    item.resolved = stream.tasks[0].train[1].features;
    item.target = 0.7;
    item.simulated_modality = 1;
    inputs.batch.push_back(item);
    inputs.replay.push_back(&buffer.entries[0]);

    for (int step = 0; step < 5; ++step) {
        grads.zero();
        accumulate_objective(model, buffer, inputs, cfg, traits_for(Variant::kBrima), &grads);
        adam_step(opt, blocks);
    }
    CHECK(perceptrons_equal(model.snapshot->scorer, frozen.scorer));
    CHECK(!perceptrons_equal(model.model.scorer, frozen.scorer));
}

TEST_CASE("two runs with one seed produce bitwise-identical reports and parameters") {
    const TaskStream stream =
        apply_missing_pattern(generate_synthetic_stream(tiny_stream_cfg()), 0.25, 3);
    TrainerConfig cfg = tiny_trainer_cfg();
    cfg.variant = Variant::kBrima;

    ScoringModel first_model, second_model;
    auto capture_first = [&](const TrainerState& s, int) { first_model = s.model.model; };
    auto capture_second = [&](const TrainerState& s, int) { second_model = s.model.model; };
    const SessionReport a = run_stream(stream, cfg, capture_first);
    const SessionReport b = run_stream(stream, cfg, capture_second);
    CHECK(report_to_json(a) == report_to_json(b));
    CHECK(report_to_csv(a) == report_to_csv(b));
    CHECK(perceptrons_equal(first_model.scorer, second_model.scorer));

    TrainerConfig other = cfg;
    other.seed = 2;
    const SessionReport c = run_stream(stream, other);
    CHECK(report_to_json(a) != report_to_json(c));
}

TEST_CASE("report matrix is lower-triangular with absent cells above the diagonal") {
    const TaskStream stream =
        apply_missing_pattern(generate_synthetic_stream(tiny_stream_cfg()), 0.25, 3);
    TrainerConfig cfg = tiny_trainer_cfg();
    const SessionReport report = run_stream(stream, cfg);
    CHECK(report.sessions == 3);
    CHECK(report.tasks == 3);
    for (int t = 0; t < 3; ++t) {
        for (int k = 0; k < 3; ++k) {
            CHECK(report.cells[t][k].has_value() == (k <= t));
        }
    }
    CHECK(report.session_metrics.size() == 3);
    CHECK(report.mask_hash == mask_hash(stream));
}

TEST_CASE("with everything observed and weights off, training is plain regression") {
    // Reference loop written against the numeric core only.
    StreamConfig scfg = tiny_stream_cfg();
    scfg.tasks = 1;
    const TaskStream stream = generate_synthetic_stream(scfg);
    TrainerConfig cfg = tiny_trainer_cfg();
    cfg.variant = Variant::kSequential;
    cfg.lambda_mem = 0.0;
    cfg.lambda_rec = 0.0;

    ScoringModel trained;
    run_stream(stream, cfg, [&](const TrainerState& s, int) { trained = s.model.model; });

    // Rebuild the same initialization (the scorer is drawn first).
    auto init_rng = make_rng(cfg.seed, rng_stream::kInit);
    PerceptronParams scorer = make_perceptron(
        {stream.total_feature_dim(), cfg.scorer_hidden, 1}, Activation::kRectifier, init_rng);
    auto grads = PerceptronGrads::zeros_like(scorer);
    std::vector<ParamBlock> blocks;
    collect_blocks("scorer", scorer, grads, blocks);
    AdamState opt;
    opt.weight_decay = cfg.weight_decay;

    const auto& train = stream.tasks[0].train;
    double mean = 0.0;
    for (const auto& s : train) mean += s.score;
    mean /= static_cast<double>(train.size());
    double var = 0.0;
    for (const auto& s : train) var += (s.score - mean) * (s.score - mean);
    var /= static_cast<double>(train.size());
    const double stddev = var > 1e-24 ? std::sqrt(var) : 1.0;

    std::vector<int> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        opt.learning_rate = cosine_lr(cfg.learning_rate, cfg.lr_floor_fraction, epoch, cfg.epochs);
        auto shuffle_rng = make_rng(cfg.seed, rng_stream::kShuffle, 1, static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            grads.zero();
            const double inv_n = 1.0 / static_cast<double>(stop - start);
            for (std::size_t pos = start; pos < stop; ++pos) {
                const auto& sample = train[static_cast<std::size_t>(order[pos])];
                Vector x;
                for (const Vector& f : sample.features) x.insert(x.end(), f.begin(), f.end());
                ForwardCache cache;
                const Vector out = perceptron_forward(scorer, x, &cache);
                const double target = (sample.score - mean) / stddev;
                perceptron_backward(scorer, cache, {2.0 * (out[0] - target) * inv_n}, grads);
            }
            adam_step(opt, blocks);
        }
    }
    CHECK(perceptrons_equal(trained.scorer, scorer));
}

TEST_CASE("brima on a single-task stream matches sequential training bitwise") {
    StreamConfig scfg = tiny_stream_cfg();
    scfg.tasks = 1;
    const TaskStream stream = generate_synthetic_stream(scfg);
    TrainerConfig cfg = tiny_trainer_cfg();

    cfg.variant = Variant::kBrima;
    ScoringModel brima_model;
    run_stream(stream, cfg, [&](const TrainerState& s, int) { brima_model = s.model.model; });

    cfg.variant = Variant::kSequential;
    ScoringModel seq_model;
    run_stream(stream, cfg, [&](const TrainerState& s, int) { seq_model = s.model.model; });

    CHECK(perceptrons_equal(brima_model.scorer, seq_model.scorer));
}

TEST_CASE("full-objective gradient check on a toy instance") {
    // Small state with tanh nonlinearities and all three loss terms active.
    const std::vector<int> dims{4, 4, 4};
    auto rng = make_rng(71);
    std::normal_distribution<double> gauss(0.0, 1.0);

    TrainerConfig cfg = tiny_trainer_cfg();
    cfg.condition_dim = 4;
    cfg.pool_dim = 4;
    cfg.retrieval_k = 3;

    ModelState state;
    state.model.scorer = make_perceptron({12, 5, 1}, Activation::kTanh, rng);
    state.bridge = make_bridge(dims, cfg.condition_dim, 5, Activation::kTanh, rng);
    for (auto& net : state.bridge.nets) {
        for (double& w : net.layers.back().weight.data) w = 0.1 * gauss(rng);
        for (double& b : net.layers.back().bias) b = 0.1 * gauss(rng);
    }
    state.pool = make_pool(3, cfg.pool_dim, cfg.condition_dim, rng);
    ScoringModel snap;
    snap.scorer = state.model.scorer;
    for (double& w : snap.scorer.layers[0].weight.data) w += 0.05 * gauss(rng);
    state.snapshot = snap;

    MemoryBuffer buffer;
    for (int i = 0; i < 4; ++i) {
        MemoryEntry e;
        e.sample.id = "b" + std::to_string(i);
        e.sample.task_index = 0;
        e.sample.missing = {0, 0, 0};
        for (int m = 0; m < 3; ++m) {
            Vector f(4);
            for (double& v : f) v = gauss(rng);
            e.sample.features.push_back(std::move(f));
        }
        e.insertion_order = buffer.next_insertion_order++;
        buffer.entries.push_back(std::move(e));
    }

    StepInputs inputs;
    for (int i = 0; i < 2; ++i) {
        StepInputs::Item item;
        item.resolved.resize(3);
        for (auto& f : item.resolved) {
            f.resize(4);
            for (double& v : f) v = gauss(rng);
        }
        item.target = gauss(rng);
        item.simulated_modality = i;  // reconstruction active on both items
        inputs.batch.push_back(std::move(item));
    }
    inputs.replay.push_back(&buffer.entries[0]);
    inputs.replay.push_back(&buffer.entries[2]);

    Gradients grads = Gradients::zeros_like(state);
    auto blocks = collect_param_blocks(state, grads);
    const VariantTraits traits = traits_for(Variant::kBrima);
    auto loss = [&] {
        return accumulate_objective(state, buffer, inputs, cfg, traits, nullptr).objective;
    };
    auto compute = [&] {
        grads.zero();
        accumulate_objective(state, buffer, inputs, cfg, traits, &grads);
    };
    const StepLosses losses = accumulate_objective(state, buffer, inputs, cfg, traits, nullptr);
    CHECK(losses.memory > 0.0);
    CHECK(losses.reconstruction > 0.0);
    CHECK(losses.reconstruction_slots == 2);
    CHECK(gradient_check(loss, compute, blocks, 1e-5) < 1e-4);
}

TEST_CASE("ablation grid: repeated variants aggregate identically, masks agree") {
    const TaskStream stream =
        apply_missing_pattern(generate_synthetic_stream(tiny_stream_cfg()), 0.25, 3);
    TrainerConfig cfg = tiny_trainer_cfg();
    cfg.epochs = 2;
    const std::vector<Variant> variants{Variant::kBrima, Variant::kSequential, Variant::kBrima};
    const AblationResult result = run_ablation_grid(stream, cfg, variants, {1, 2});
    REQUIRE(result.table.size() == 3);
    CHECK(result.table[0].srcc_mean == result.table[2].srcc_mean);
    CHECK(result.table[0].mse_mean == result.table[2].mse_mean);
    CHECK(result.runs.size() == 6);
    for (const auto& run : result.runs) CHECK(run.mask_hash == result.runs[0].mask_hash);

    CHECK_THROWS_AS(run_ablation_grid(stream, cfg, {}, {1}), ConfigError);
}

TEST_CASE("joint training on a drift-free stream matches per-task training") {
    StreamConfig scfg;
    scfg.tasks = 2;
    scfg.modalities = 2;
    scfg.train_per_task = 60;
    scfg.eval_per_task = 30;
    scfg.feature_dims = {6, 6};
    scfg.latent_dim = 4;
    scfg.drift_rotation = 0.0;
    scfg.drift_shift = 0.0;
    scfg.seed = 11;
    const TaskStream stream = generate_synthetic_stream(scfg);

    TrainerConfig cfg = tiny_trainer_cfg();
    cfg.epochs = 40;
    cfg.learning_rate = 1e-3;
    cfg.scorer_hidden = 16;

    cfg.variant = Variant::kJoint;
    const SessionReport joint = run_stream(stream, cfg);
    REQUIRE(joint.sessions == 1);

    cfg.variant = Variant::kSequential;
    for (int k = 0; k < 2; ++k) {
        const SessionReport single = run_stream(slice_task(stream, k), cfg);
        REQUIRE(joint.cells[0][k].has_value());
        REQUIRE(single.cells[0][0].has_value());
        const double joint_srcc = joint.cells[0][k]->srcc.value();
        const double single_srcc = single.cells[0][0]->srcc.value();
        CHECK(joint_srcc > 0.7);
        CHECK(single_srcc > 0.7);
        CHECK(std::fabs(joint_srcc - single_srcc) < 0.15);
    }
}

TEST_CASE("checkpoint round-trips every block exactly") {
    const TaskStream stream = generate_synthetic_stream(tiny_stream_cfg());
    const TrainerConfig cfg = tiny_trainer_cfg();
    ModelState state = init_model_state(cfg, stream);
    state.snapshot = state.model;

    const std::string path =
        (std::filesystem::temp_directory_path() / "brima_model.ckpt").string();
    save_checkpoint(state, path);
    const ModelState loaded = load_checkpoint(path);
    CHECK(perceptrons_equal(loaded.model.scorer, state.model.scorer));
    REQUIRE(loaded.bridge.nets.size() == state.bridge.nets.size());
    for (std::size_t m = 0; m < state.bridge.nets.size(); ++m) {
        CHECK(perceptrons_equal(loaded.bridge.nets[m], state.bridge.nets[m]));
    }
    CHECK(perceptrons_equal(loaded.pool.conditioner, state.pool.conditioner));
    CHECK(loaded.pool.embeddings == state.pool.embeddings);
    REQUIRE(loaded.snapshot.has_value());
    CHECK(perceptrons_equal(loaded.snapshot->scorer, state.snapshot->scorer));
    std::remove(path.c_str());
}

TEST_CASE("config files: defaults, overrides, unknown keys") {
    const FileConfig defaults = parse_config("{}");
    CHECK(defaults.trainer.epochs == 50);
    CHECK(defaults.trainer.learning_rate == 3e-4);
    CHECK(defaults.trainer.buffer_capacity == 50);
    CHECK(defaults.trainer.quantile_bins == 10);
    CHECK(defaults.trainer.replay_alpha == 0.5);
    CHECK(defaults.trainer.lambda_mem == 1.0);
    CHECK(defaults.trainer.lambda_rec == 1.0);
    CHECK(defaults.trainer.batch_size == 4);
    CHECK(defaults.trainer.replay_batch == 2);
    CHECK(defaults.stream.tasks == 5);
    CHECK(defaults.stream.modalities == 3);

    const FileConfig cfg = parse_config(
        "{\"stream\":{\"tasks\":2,\"missing_rate\":0.5},"
        "\"trainer\":{\"variant\":\"no-candidate\",\"epochs\":7}}");
    CHECK(cfg.stream.tasks == 2);
    CHECK(cfg.trainer.epochs == 7);
    CHECK(cfg.trainer.variant == Variant::kNoCandidate);

    CHECK_THROWS_AS(parse_config("{\"trainer\":{\"epoch\":7}}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"trainer\":{\"variant\":\"bogus\"}}"), ConfigError);
    CHECK_THROWS_AS(parse_config("not json"), ParseError);
}

TEST_CASE("variant names round-trip") {
    for (Variant v : all_variants()) {
        CHECK(variant_from_name(variant_name(v)) == v);
    }
    CHECK_THROWS_AS(variant_from_name("nope"), ConfigError);
}
