#include "brima/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace brima {

namespace {

void check_keys(const nlohmann::json& obj, const std::set<std::string>& known,
                const std::string& section) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!known.count(it.key())) {
            throw ConfigError("config: unknown key '" + it.key() + "' in " + section);
        }
    }
}

template <typename T>
void read(const nlohmann::json& obj, const char* key, T& target) {
    if (obj.contains(key)) target = obj.at(key).get<T>();
}

StreamConfig parse_stream(const nlohmann::json& obj) {
    static const std::set<std::string> known = {
        "tasks",        "modalities",    "train_per_task", "eval_per_task",
        "feature_dims", "score_min",     "score_max",      "latent_dim",
        "feature_noise", "drift_rotation", "drift_shift",  "missing_rate",
        "seed",
    };
    check_keys(obj, known, "stream");
    StreamConfig cfg;
    read(obj, "tasks", cfg.tasks);
    read(obj, "modalities", cfg.modalities);
    read(obj, "train_per_task", cfg.train_per_task);
    read(obj, "eval_per_task", cfg.eval_per_task);
    read(obj, "feature_dims", cfg.feature_dims);
    read(obj, "score_min", cfg.score_min);
    read(obj, "score_max", cfg.score_max);
    read(obj, "latent_dim", cfg.latent_dim);
    read(obj, "feature_noise", cfg.feature_noise);
    read(obj, "drift_rotation", cfg.drift_rotation);
    read(obj, "drift_shift", cfg.drift_shift);
    read(obj, "missing_rate", cfg.missing_rate);
    read(obj, "seed", cfg.seed);
    cfg.validate();
    return cfg;
}

TrainerConfig parse_trainer(const nlohmann::json& obj) {
    static const std::set<std::string> known = {
        "variant",       "seed",          "epochs",          "batch_size",
        "replay_batch",  "learning_rate", "lr_floor_fraction", "weight_decay",
        "retrieval_k",   "quantile_bins", "buffer_capacity", "replay_alpha",
        "lambda_mem",    "lambda_rec",    "simulate_missing_prob",
        "scorer_hidden", "bridge_hidden", "pool_dim",        "condition_dim",
    };
    check_keys(obj, known, "trainer");
    TrainerConfig cfg;
    if (obj.contains("variant")) cfg.variant = variant_from_name(obj.at("variant").get<std::string>());
    read(obj, "seed", cfg.seed);
    read(obj, "epochs", cfg.epochs);
    read(obj, "batch_size", cfg.batch_size);
    read(obj, "replay_batch", cfg.replay_batch);
    read(obj, "learning_rate", cfg.learning_rate);
    read(obj, "lr_floor_fraction", cfg.lr_floor_fraction);
    read(obj, "weight_decay", cfg.weight_decay);
    read(obj, "retrieval_k", cfg.retrieval_k);
    read(obj, "quantile_bins", cfg.quantile_bins);
    read(obj, "buffer_capacity", cfg.buffer_capacity);
    read(obj, "replay_alpha", cfg.replay_alpha);
    read(obj, "lambda_mem", cfg.lambda_mem);
    read(obj, "lambda_rec", cfg.lambda_rec);
    read(obj, "simulate_missing_prob", cfg.simulate_missing_prob);
    read(obj, "scorer_hidden", cfg.scorer_hidden);
    read(obj, "bridge_hidden", cfg.bridge_hidden);
    read(obj, "pool_dim", cfg.pool_dim);
    read(obj, "condition_dim", cfg.condition_dim);
    cfg.validate();
    return cfg;
}

}  // namespace

FileConfig parse_config(const std::string& json_text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(json_text);
    } catch (const std::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    check_keys(root, {"stream", "trainer"}, "top level");
    FileConfig cfg;
    if (root.contains("stream")) cfg.stream = parse_stream(root.at("stream"));
    if (root.contains("trainer")) cfg.trainer = parse_trainer(root.at("trainer"));
    return cfg;
}

FileConfig load_config_file(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ParseError("config: cannot open " + path);
    std::ostringstream ss;
    ss << file.rdbuf();
    return parse_config(ss.str());
}

}  // namespace brima
