#include "brima/mro.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "brima/rng.hpp"
#include "json_write.hpp"

namespace brima {

namespace {

constexpr double kSamplingFloor = 1e-6;

// Consecutive equal-count slices of a ranked list; the remainder is spread
// over the leading bins.
std::vector<std::pair<int, int>> partition_bins(int count, int bins) {
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<std::size_t>(bins));
    const int base = count / bins;
    const int rem = count % bins;
    int start = 0;
    for (int b = 0; b < bins; ++b) {
        const int size = base + (b < rem ? 1 : 0);
        out.emplace_back(start, start + size);
        start += size;
    }
    return out;
}

}  // namespace

MemoryBuffer select_memory(const std::vector<MultiModalSample>& samples,
                           const Vector& predictions, int quantile_bins, int capacity,
                           std::uint64_t seed, SelectionDiagnostics* diag) {
    if (samples.size() != predictions.size()) {
        throw ContractError("select_memory: predictions not aligned with samples");
    }
    if (quantile_bins < 1) throw ContractError("select_memory: quantile_bins must be >= 1");
    if (capacity < 0) throw ContractError("select_memory: negative capacity");

    MemoryBuffer fresh;
    fresh.capacity = capacity;
    if (capacity == 0 || samples.empty()) return fresh;

    std::vector<int> pool(samples.size());
    std::iota(pool.begin(), pool.end(), 0);
    std::sort(pool.begin(), pool.end(), [&](int a, int b) {
        if (predictions[a] != predictions[b]) return predictions[a] < predictions[b];
        return a < b;
    });

    const int per_bin_cap = (capacity + quantile_bins - 1) / quantile_bins;
    auto rng = make_rng(seed);
    std::vector<int> selected;
    std::vector<int> first_round_bin(samples.size(), -1);

    int round = 0;
    while (static_cast<int>(selected.size()) < capacity && !pool.empty()) {
        ++round;
        const auto bins = partition_bins(static_cast<int>(pool.size()), quantile_bins);
        std::vector<std::vector<int>> candidates(bins.size());
        for (std::size_t b = 0; b < bins.size(); ++b) {
            for (int i = bins[b].first; i < bins[b].second; ++i) {
                const int idx = pool[static_cast<std::size_t>(i)];
                if (round == 1) first_round_bin[static_cast<std::size_t>(idx)] = static_cast<int>(b);
                if (samples[static_cast<std::size_t>(idx)].is_complete()) {
                    candidates[b].push_back(idx);
                }
            }
            std::shuffle(candidates[b].begin(), candidates[b].end(), rng);
        }
        if (round == 1 && diag) {
            diag->bin_complete.assign(bins.size(), 0);
            diag->bin_selected.assign(bins.size(), 0);
            for (std::size_t b = 0; b < bins.size(); ++b) {
                diag->bin_complete[b] = static_cast<int>(candidates[b].size());
            }
        }

        // Round-robin over bins, one pick at a time, each bin capped.
        std::vector<std::size_t> cursor(bins.size(), 0);
        std::vector<int> taken(bins.size(), 0);
        int picked_this_round = 0;
        bool progress = true;
        while (progress && static_cast<int>(selected.size()) < capacity) {
            progress = false;
            for (std::size_t b = 0; b < bins.size(); ++b) {
                if (static_cast<int>(selected.size()) >= capacity) break;
                if (taken[b] >= per_bin_cap) continue;
                if (cursor[b] >= candidates[b].size()) continue;
                selected.push_back(candidates[b][cursor[b]++]);
                ++taken[b];
                ++picked_this_round;
                progress = true;
            }
        }
        if (picked_this_round == 0) break;  // no reachable complete samples left

        std::vector<char> chosen(samples.size(), 0);
        for (int idx : selected) chosen[static_cast<std::size_t>(idx)] = 1;
        pool.erase(std::remove_if(pool.begin(), pool.end(),
                                  [&](int idx) { return chosen[static_cast<std::size_t>(idx)]; }),
                   pool.end());
    }

    if (diag) {
        diag->rounds = round;
        for (int idx : selected) {
            const int b = first_round_bin[static_cast<std::size_t>(idx)];
            if (b >= 0 && b < static_cast<int>(diag->bin_selected.size())) {
                ++diag->bin_selected[static_cast<std::size_t>(b)];
            }
        }
    }

    fresh.entries.reserve(selected.size());
    for (int idx : selected) {
        MemoryEntry entry;
        entry.sample = samples[static_cast<std::size_t>(idx)];
        entry.predicted_score = predictions[static_cast<std::size_t>(idx)];
        entry.insertion_order = fresh.next_insertion_order++;
        fresh.entries.push_back(std::move(entry));
    }
    return fresh;
}

void merge_memory(MemoryBuffer& buffer, MemoryBuffer incoming, int session, int total_capacity) {
    if (total_capacity < 0) throw ContractError("merge_memory: negative capacity");
    const int overflow = buffer.size() + incoming.size() - total_capacity;
    if (overflow > 0) {
        std::vector<int> order(buffer.entries.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const MemoryEntry& ea = buffer.entries[static_cast<std::size_t>(a)];
            const MemoryEntry& eb = buffer.entries[static_cast<std::size_t>(b)];
            if (ea.priority != eb.priority) return ea.priority < eb.priority;
            return ea.insertion_order < eb.insertion_order;
        });
        const int evict = std::min<int>(overflow, buffer.size());
        std::vector<char> drop(buffer.entries.size(), 0);
        for (int i = 0; i < evict; ++i) drop[static_cast<std::size_t>(order[i])] = 1;
        std::vector<MemoryEntry> kept;
        kept.reserve(buffer.entries.size() - static_cast<std::size_t>(evict));
        for (std::size_t i = 0; i < buffer.entries.size(); ++i) {
            if (!drop[i]) kept.push_back(std::move(buffer.entries[i]));
        }
        buffer.entries = std::move(kept);
    }
    for (MemoryEntry& entry : incoming.entries) {
        if (buffer.size() >= total_capacity) break;
        if (!entry.sample.is_complete()) {
            throw ContractError("merge_memory: incomplete sample " + entry.sample.id);
        }
        entry.insertion_session = session;
        entry.insertion_order = buffer.next_insertion_order++;
        buffer.entries.push_back(std::move(entry));
    }
    buffer.capacity = total_capacity;
}

double modality_distortion(const Vector& imputed, const Vector& truth) {
    if (imputed.size() != truth.size()) throw ShapeError("modality_distortion: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < imputed.size(); ++i) {
        const double d = imputed[i] - truth[i];
        acc += d * d;
    }
    return acc;
}

namespace {

Vector entry_concat(const MemoryEntry& entry) {
    std::vector<const Vector*> slots;
    slots.reserve(entry.sample.features.size());
    for (const Vector& f : entry.sample.features) slots.push_back(&f);
    return concat_slots(slots);
}

}  // namespace

double score_drift(const ScoringModel& current, const ScoringModel* snapshot,
                   const MemoryEntry& entry) {
    if (snapshot == nullptr) return 0.0;
    const Vector x = entry_concat(entry);
    return std::fabs(predict_concat(current, x) - predict_concat(*snapshot, x));
}

double replay_priority(double distortion, double drift, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ContractError("replay_priority: alpha must lie in [0, 1]");
    return alpha * distortion + (1.0 - alpha) * drift;
}

std::vector<int> sample_replay(const MemoryBuffer& buffer, int batch, std::uint64_t seed) {
    if (buffer.empty()) throw ContractError("sample_replay: empty buffer");
    if (batch >= buffer.size()) {
        std::vector<int> all(buffer.entries.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    std::vector<int> remaining(buffer.entries.size());
    std::iota(remaining.begin(), remaining.end(), 0);
    std::vector<double> weights;
    weights.reserve(remaining.size());
    for (const MemoryEntry& e : buffer.entries) weights.push_back(e.priority + kSamplingFloor);

    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(batch));
    for (int k = 0; k < batch; ++k) {
        double total = 0.0;
        for (int idx : remaining) total += weights[static_cast<std::size_t>(idx)];
        const double target = uni(rng) * total;
        double acc = 0.0;
        std::size_t pick = remaining.size() - 1;
        for (std::size_t i = 0; i < remaining.size(); ++i) {
            acc += weights[static_cast<std::size_t>(remaining[i])];
            if (target < acc) {
                pick = i;
                break;
            }
        }
        out.push_back(remaining[pick]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return out;
}

std::vector<int> sample_uniform(const MemoryBuffer& buffer, int batch, std::uint64_t seed) {
    if (buffer.empty()) throw ContractError("sample_uniform: empty buffer");
    std::vector<int> all(buffer.entries.size());
    std::iota(all.begin(), all.end(), 0);
    if (batch >= buffer.size()) return all;
    auto rng = make_rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(static_cast<std::size_t>(batch));
    return all;
}

double consistency_loss(const ScoringModel& current, const ScoringModel* snapshot,
                        const std::vector<const MemoryEntry*>& batch,
                        PerceptronGrads* grads, double grad_scale) {
    if (snapshot == nullptr || batch.empty()) return 0.0;
    double acc = 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const MemoryEntry* entry : batch) {
        const Vector x = entry_concat(*entry);
        ForwardCache cache;
        const double cur = predict_concat(current, x, grads ? &cache : nullptr);
        const double snap = predict_concat(*snapshot, x);
        const double d = cur - snap;
        acc += d * d;
        if (grads) {
            const Vector upstream{2.0 * d * inv_n * grad_scale};
            perceptron_backward(current.scorer, cache, upstream, *grads);
        }
    }
    return acc * inv_n;
}

void export_buffer(const MemoryBuffer& buffer, const TaskStream& stream, const std::string& path) {
    std::string out;
    out += "{\"format\":\"brima-buffer\",\"version\":1,\"modalities\":" +
           std::to_string(stream.modality_count) + ",\"feature_dims\":[";
    for (std::size_t i = 0; i < stream.feature_dims.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(stream.feature_dims[i]);
    }
    out += "],\"score_range\":[";
    jsonw::number(out, stream.score_min);
    out += ',';
    jsonw::number(out, stream.score_max);
    out += "],\"entries\":" + std::to_string(buffer.size()) + "}\n";
    for (const MemoryEntry& entry : buffer.entries) {
        out += '{';
        jsonw::sample_fields(out, entry.sample, "train");
        out += ",\"predicted_score\":";
        jsonw::number(out, entry.predicted_score);
        out += ",\"priority\":";
        jsonw::number(out, entry.priority);
        out += "}\n";
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw ParseError("export_buffer: cannot open " + path + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw ParseError("export_buffer: write to " + path + " failed");
}

}  // namespace brima
