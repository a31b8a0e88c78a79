#include "brima/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "brima/rng.hpp"
#include "json.hpp"
#include "json_write.hpp"

namespace brima {

bool MultiModalSample::is_complete() const {
    for (std::uint8_t m : missing) {
        if (m) return false;
    }
    return true;
}

std::vector<int> MultiModalSample::observed() const {
    std::vector<int> out;
    for (int m = 0; m < modality_count(); ++m) {
        if (!missing[m]) out.push_back(m);
    }
    return out;
}

int TaskStream::total_feature_dim() const {
    int total = 0;
    for (int d : feature_dims) total += d;
    return total;
}

void TaskStream::validate() const {
    if (tasks.empty()) throw SchemaError("stream: no tasks");
    if (static_cast<int>(feature_dims.size()) != modality_count) {
        throw SchemaError("stream: feature_dims length does not match modality count");
    }
    if (!(score_max > score_min)) throw SchemaError("stream: empty score range");
    for (int t = 0; t < task_count(); ++t) {
        if (tasks[t].train.empty()) {
            throw SchemaError("stream: task " + std::to_string(t) + " has no train samples");
        }
        auto check = [&](const MultiModalSample& s) {
            if (s.task_index != t) {
                throw SchemaError("stream: sample " + s.id + " task index " +
                                  std::to_string(s.task_index) + " stored under task " +
                                  std::to_string(t));
            }
            if (s.modality_count() != modality_count ||
                static_cast<int>(s.features.size()) != modality_count) {
                throw SchemaError("stream: sample " + s.id + " modality count mismatch");
            }
            bool any_observed = false;
            for (int m = 0; m < modality_count; ++m) {
                const bool has = !s.features[m].empty();
                if (has != !s.missing[m]) {
                    throw SchemaError("stream: sample " + s.id + " mask inconsistent at modality " +
                                      std::to_string(m));
                }
                if (has) {
                    any_observed = true;
                    if (static_cast<int>(s.features[m].size()) != feature_dims[m]) {
                        throw SchemaError("stream: sample " + s.id + " modality " +
                                          std::to_string(m) + " has length " +
                                          std::to_string(s.features[m].size()) + ", expected " +
                                          std::to_string(feature_dims[m]));
                    }
                    if (!all_finite(s.features[m])) {
                        throw SchemaError("stream: sample " + s.id + " has non-finite features");
                    }
                }
            }
            if (!any_observed) throw SchemaError("stream: sample " + s.id + " has no observed modality");
            if (s.score < score_min || s.score > score_max) {
                throw SchemaError("stream: sample " + s.id + " score out of range");
            }
        };
        for (const auto& s : tasks[t].train) check(s);
        for (const auto& s : tasks[t].eval) check(s);
    }
}

std::vector<int> StreamConfig::resolved_dims() const {
    if (!feature_dims.empty()) return feature_dims;
    return std::vector<int>(static_cast<std::size_t>(modalities), 32);
}

void StreamConfig::validate() const {
    if (tasks < 1) throw ConfigError("stream config: tasks must be >= 1");
    if (modalities < 1) throw ConfigError("stream config: modalities must be >= 1");
    if (train_per_task < 1) throw ConfigError("stream config: train_per_task must be >= 1");
    if (eval_per_task < 1) throw ConfigError("stream config: eval_per_task must be >= 1");
    const auto dims = resolved_dims();
    if (static_cast<int>(dims.size()) != modalities) {
        throw ConfigError("stream config: feature_dims length must equal modalities");
    }
    for (int d : dims) {
        if (d < 1) throw ConfigError("stream config: feature dims must be positive");
    }
    if (!(score_max > score_min)) throw ConfigError("stream config: score_max must exceed score_min");
    if (latent_dim < 2) throw ConfigError("stream config: latent_dim must be >= 2");
    if (feature_noise < 0.0) throw ConfigError("stream config: feature_noise must be >= 0");
    if (drift_rotation < 0.0) throw ConfigError("stream config: drift_rotation must be >= 0");
    if (missing_rate < 0.0 || missing_rate >= 1.0) {
        throw ConfigError("stream config: missing_rate must lie in [0, 1)");
    }
}

namespace {

Vector random_unit(std::mt19937_64& rng, int dim) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector v(static_cast<std::size_t>(dim));
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : v) {
            x = gauss(rng);
            norm += x * x;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Unit vector orthogonal to `dir`, built from a random draw.
Vector random_orthogonal(const Vector& dir, std::mt19937_64& rng) {
    Vector v = random_unit(rng, static_cast<int>(dir.size()));
    double along = dot(v, dir);
    double norm = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] -= along * dir[i];
        norm += v[i] * v[i];
    }
    norm = std::sqrt(norm);
    if (norm < 1e-9) {
        // retry with a fresh draw; two collinear draws in a row is negligible
        return random_orthogonal(dir, rng);
    }
    for (double& x : v) x /= norm;
    return v;
}

}  // namespace

TaskStream generate_synthetic_stream(const StreamConfig& cfg) {
    cfg.validate();
    const auto dims = cfg.resolved_dims();

    TaskStream stream;
    stream.modality_count = cfg.modalities;
    stream.feature_dims = dims;
    stream.score_min = cfg.score_min;
    stream.score_max = cfg.score_max;
    stream.tasks.resize(static_cast<std::size_t>(cfg.tasks));

    auto setup_rng = make_rng(cfg.seed, rng_stream::kGeneratorSetup);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Latent vectors are a correlated Gaussian: u = C g with g standard
    // normal of lower rank. Each coordinate of u is visible to exactly one
    // modality, so a missing modality removes sample-level information that
    // the observed modalities only carry through the latent correlation.
    const int rank = std::max(2, (2 * cfg.latent_dim) / 3);
    DenseMatrix mixing(cfg.latent_dim, rank);
    for (double& x : mixing.data) x = gauss(setup_rng) / std::sqrt(static_cast<double>(rank));
    {
        // Row-normalize so every latent coordinate has unit variance.
        for (int i = 0; i < mixing.rows; ++i) {
            double norm = 0.0;
            for (int j = 0; j < mixing.cols; ++j) norm += mixing(i, j) * mixing(i, j);
            norm = std::sqrt(norm);
            if (norm > 1e-12) {
                for (int j = 0; j < mixing.cols; ++j) mixing(i, j) /= norm;
            }
        }
    }

    // Shared modality maps: features[m] = A_m u + b_m + noise, where A_m
    // only reads the coordinates assigned to modality m. The fixed offset
    // b_m keeps the feature cloud away from the origin, like embedding
    // features, so a zero-filled slot sits far out of distribution.
    std::vector<DenseMatrix> modality_maps;
    std::vector<Vector> modality_offsets;
    modality_maps.reserve(dims.size());
    modality_offsets.reserve(dims.size());
    const double map_scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
    for (std::size_t m = 0; m < dims.size(); ++m) {
        DenseMatrix a(dims[m], cfg.latent_dim);
        for (double& x : a.data) x = gauss(setup_rng) * map_scale;
        if (cfg.modalities >= 2) {
            for (int j = 0; j < cfg.latent_dim; ++j) {
                if (j % cfg.modalities != static_cast<int>(m)) {
                    for (int r = 0; r < a.rows; ++r) a(r, j) = 0.0;
                }
            }
        }
        modality_maps.push_back(std::move(a));
        Vector offset(static_cast<std::size_t>(dims[m]));
        for (double& x : offset) x = gauss(setup_rng);
        modality_offsets.push_back(std::move(offset));
    }

    // The score direction lives in the source space, where rotations keep
    // their full angle; through u = C g the score stays affine in u. The
    // direction walks a fixed random great circle, so consecutive tasks sit
    // exactly drift_rotation radians apart and the angle compounds.
    Vector score_dir = random_unit(setup_rng, rank);
    Vector drift_velocity = random_orthogonal(score_dir, setup_rng);
    const double range = cfg.score_max - cfg.score_min;
    const double center = 0.5 * (cfg.score_min + cfg.score_max);
    // Wide gain saturates the score tails against the clamp, the one
    // nonlinearity of the scoring function.
    const double gain = range / 3.5;

    for (int t = 0; t < cfg.tasks; ++t) {
        if (t > 0) {
            const double c = std::cos(cfg.drift_rotation);
            const double s = std::sin(cfg.drift_rotation);
            Vector next_dir(score_dir.size()), next_vel(score_dir.size());
            for (std::size_t i = 0; i < score_dir.size(); ++i) {
                next_dir[i] = c * score_dir[i] + s * drift_velocity[i];
                next_vel[i] = -s * score_dir[i] + c * drift_velocity[i];
            }
            score_dir = std::move(next_dir);
            drift_velocity = std::move(next_vel);
        }
        const double shift = cfg.drift_shift * range * t;
        auto task_rng = make_rng(cfg.seed, rng_stream::kGeneratorTask, static_cast<std::uint64_t>(t));
        std::normal_distribution<double> task_gauss(0.0, 1.0);

        auto make_sample = [&](const std::string& id) {
            Vector source(static_cast<std::size_t>(rank));
            for (double& x : source) x = task_gauss(task_rng);
            const Vector latent = matvec(mixing, source);
            MultiModalSample s;
            s.id = id;
            s.task_index = t;
            s.missing.assign(static_cast<std::size_t>(cfg.modalities), 0);
            s.features.resize(static_cast<std::size_t>(cfg.modalities));
            for (int m = 0; m < cfg.modalities; ++m) {
                Vector f = matvec(modality_maps[m], latent);
                for (std::size_t i = 0; i < f.size(); ++i) {
                    f[i] += modality_offsets[m][i] + cfg.feature_noise * task_gauss(task_rng);
                }
                s.features[m] = std::move(f);
            }
            const double raw = center + gain * dot(score_dir, source) + shift;
            s.score = std::clamp(raw, cfg.score_min, cfg.score_max);
            return s;
        };

        TaskData& task = stream.tasks[static_cast<std::size_t>(t)];
        task.train.reserve(static_cast<std::size_t>(cfg.train_per_task));
        task.eval.reserve(static_cast<std::size_t>(cfg.eval_per_task));
        char name[64];
        for (int i = 0; i < cfg.train_per_task; ++i) {
            std::snprintf(name, sizeof(name), "t%d-train-%04d", t, i);
            task.train.push_back(make_sample(name));
        }
        for (int i = 0; i < cfg.eval_per_task; ++i) {
            std::snprintf(name, sizeof(name), "t%d-eval-%04d", t, i);
            task.eval.push_back(make_sample(name));
        }
    }
    stream.validate();
    return stream;
}

std::vector<std::uint8_t> draw_missing_flags(std::mt19937_64& rng, int modalities, double rate) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<std::uint8_t> flags(static_cast<std::size_t>(modalities), 0);
    for (int m = 0; m < modalities; ++m) {
        flags[m] = uni(rng) < rate ? 1 : 0;
    }
    return flags;
}

TaskStream apply_missing_pattern(TaskStream stream, double rate, std::uint64_t seed,
                                 bool include_eval) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("apply_missing_pattern: rate must lie in [0, 1)");
    stream.validate();
    auto rng = make_rng(seed, rng_stream::kMissing);
    auto apply = [&](MultiModalSample& s) {
        if (!s.is_complete()) {
            throw ContractError("apply_missing_pattern: sample " + s.id + " already has missing modalities");
        }
        auto flags = draw_missing_flags(rng, s.modality_count(), rate);
        bool all_missing = true;
        for (std::uint8_t f : flags) all_missing = all_missing && f;
        if (all_missing) flags[0] = 0;
        for (int m = 0; m < s.modality_count(); ++m) {
            if (flags[m]) {
                s.missing[m] = 1;
                s.features[m].clear();
            }
        }
    };
    for (TaskData& task : stream.tasks) {
        for (MultiModalSample& s : task.train) apply(s);
        if (include_eval) {
            for (MultiModalSample& s : task.eval) apply(s);
        }
    }
    return stream;
}

namespace {

void append_sample_record(std::string& out, const MultiModalSample& s, const char* split) {
    out += '{';
    jsonw::sample_fields(out, s, split);
    out += "}\n";
}

}  // namespace

void save_stream(const TaskStream& stream, const std::string& path) {
    stream.validate();
    std::string out;
    out += "{\"format\":\"brima-stream\",\"version\":1,\"tasks\":" +
           std::to_string(stream.task_count()) +
           ",\"modalities\":" + std::to_string(stream.modality_count) + ",\"feature_dims\":[";
    for (std::size_t i = 0; i < stream.feature_dims.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(stream.feature_dims[i]);
    }
    out += "],\"score_range\":[";
    jsonw::number(out, stream.score_min);
    out += ',';
    jsonw::number(out, stream.score_max);
    out += "]}\n";
    for (const TaskData& task : stream.tasks) {
        for (const MultiModalSample& s : task.train) append_sample_record(out, s, "train");
        for (const MultiModalSample& s : task.eval) append_sample_record(out, s, "eval");
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw ParseError("save_stream: cannot open " + path + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw ParseError("save_stream: write to " + path + " failed");
}

TaskStream load_stream(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ParseError("load_stream: cannot open " + path);
    std::string line;
    if (!std::getline(file, line)) throw ParseError("load_stream: empty file " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
        throw ParseError(std::string("load_stream: bad header: ") + e.what());
    }
    if (header.value("format", "") != "brima-stream") {
        throw SchemaError("load_stream: not a brima-stream file");
    }
    if (header.value("version", 0) != 1) throw SchemaError("load_stream: unsupported version");

    TaskStream stream;
    try {
        const int tasks = header.at("tasks").get<int>();
        stream.modality_count = header.at("modalities").get<int>();
        stream.feature_dims = header.at("feature_dims").get<std::vector<int>>();
        const auto range = header.at("score_range");
        stream.score_min = range.at(0).get<double>();
        stream.score_max = range.at(1).get<double>();
        if (tasks < 1) throw SchemaError("load_stream: header task count must be >= 1");
        stream.tasks.resize(static_cast<std::size_t>(tasks));
    } catch (const SchemaError&) {
        throw;
    } catch (const std::exception& e) {
        throw SchemaError(std::string("load_stream: malformed header: ") + e.what());
    }

    long record = 0;
    while (std::getline(file, line)) {
        ++record;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError("load_stream: record " + std::to_string(record) + ": " + e.what());
        }
        MultiModalSample s;
        std::string split;
        try {
            s.id = rec.at("id").get<std::string>();
            s.task_index = rec.at("task").get<int>();
            split = rec.at("split").get<std::string>();
            s.score = rec.at("score").get<double>();
            const auto& mask = rec.at("mask");
            const auto& feats = rec.at("features");
            s.missing.resize(mask.size());
            s.features.resize(feats.size());
            for (std::size_t m = 0; m < mask.size(); ++m) {
                s.missing[m] = mask.at(m).get<int>() ? 1 : 0;
            }
            for (std::size_t m = 0; m < feats.size(); ++m) {
                if (!feats.at(m).is_null()) {
                    s.features[m] = feats.at(m).get<Vector>();
                }
            }
        } catch (const std::exception& e) {
            throw ParseError("load_stream: record " + std::to_string(record) + ": " + e.what());
        }
        if (s.task_index < 0 || s.task_index >= stream.task_count()) {
            throw SchemaError("load_stream: record " + std::to_string(record) +
                              " task index out of range");
        }
        if (s.modality_count() != stream.modality_count ||
            static_cast<int>(s.features.size()) != stream.modality_count) {
            throw SchemaError("load_stream: record " + std::to_string(record) +
                              " modality count mismatch");
        }
        for (int m = 0; m < stream.modality_count; ++m) {
            if (!s.missing[m] &&
                static_cast<int>(s.features[m].size()) != stream.feature_dims[m]) {
                throw SchemaError("load_stream: record " + std::to_string(record) + " modality " +
                                  std::to_string(m) + " has length " +
                                  std::to_string(s.features[m].size()) + ", expected " +
                                  std::to_string(stream.feature_dims[m]));
            }
        }
        TaskData& task = stream.tasks[static_cast<std::size_t>(s.task_index)];
        if (split == "train") {
            task.train.push_back(std::move(s));
        } else if (split == "eval") {
            task.eval.push_back(std::move(s));
        } else {
            throw SchemaError("load_stream: record " + std::to_string(record) +
                              " has unknown split '" + split + "'");
        }
    }
    stream.validate();
    return stream;
}

std::string mask_hash(const TaskStream& stream) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint8_t byte) {
        h ^= byte;
        h *= 0x100000001b3ULL;
    };
    for (const TaskData& task : stream.tasks) {
        for (const MultiModalSample& s : task.train) {
            for (std::uint8_t m : s.missing) feed(m ? 1 : 0);
        }
        for (const MultiModalSample& s : task.eval) {
            for (std::uint8_t m : s.missing) feed(m ? 1 : 0);
        }
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace brima
