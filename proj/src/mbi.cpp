#include "brima/mbi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace brima {

Vector observed_summary(const std::vector<Vector>& features,
                        const std::vector<std::uint8_t>& missing,
                        const std::vector<int>& feature_dims) {
    if (features.size() != feature_dims.size() || missing.size() != feature_dims.size()) {
        throw ShapeError("observed_summary: modality count mismatch");
    }
    bool any_observed = false;
    int total = 0;
    for (int d : feature_dims) total += d;
    Vector out(static_cast<std::size_t>(total), 0.0);
    std::size_t offset = 0;
    for (std::size_t m = 0; m < feature_dims.size(); ++m) {
        const std::size_t dim = static_cast<std::size_t>(feature_dims[m]);
        if (!missing[m]) {
            if (features[m].size() != dim) {
                throw ShapeError("observed_summary: modality " + std::to_string(m) +
                                 " has unexpected length");
            }
            std::copy(features[m].begin(), features[m].end(), out.begin() + offset);
            any_observed = true;
        }
        offset += dim;
    }
    if (!any_observed) throw ContractError("observed_summary: no observed modality");
    return out;
}

Vector observed_summary(const MultiModalSample& sample, const std::vector<int>& feature_dims) {
    return observed_summary(sample.features, sample.missing, feature_dims);
}

double cosine_similarity(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double buffer_similarity(const std::vector<Vector>& query_features,
                         const std::vector<std::uint8_t>& query_missing,
                         const MemoryEntry& entry) {
    double acc = 0.0;
    int count = 0;
    for (std::size_t m = 0; m < query_missing.size(); ++m) {
        if (query_missing[m]) continue;
        acc += cosine_similarity(query_features[m], entry.sample.features[m]);
        ++count;
    }
    if (count == 0) throw ContractError("buffer_similarity: query has no observed modality");
    return acc / count;
}

RetrievalResult retrieve_candidates(const std::vector<Vector>& query_features,
                                    const std::vector<std::uint8_t>& query_missing,
                                    const MemoryBuffer& buffer, int modality, int k,
                                    long exclude_order) {
    if (k < 1) throw ContractError("retrieve_candidates: k must be >= 1");
    std::vector<int> usable;
    usable.reserve(buffer.entries.size());
    for (int i = 0; i < buffer.size(); ++i) {
        if (buffer.entries[static_cast<std::size_t>(i)].insertion_order != exclude_order) {
            usable.push_back(i);
        }
    }
    if (usable.empty()) throw ContractError("retrieve_candidates: buffer is empty");
    if (modality < 0 || modality >= static_cast<int>(query_missing.size())) {
        throw ContractError("retrieve_candidates: modality index out of range");
    }

    Vector sims(usable.size());
    for (std::size_t i = 0; i < usable.size(); ++i) {
        sims[i] = buffer_similarity(query_features, query_missing,
                                    buffer.entries[static_cast<std::size_t>(usable[i])]);
    }
    std::vector<std::size_t> order(usable.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return buffer.entries[static_cast<std::size_t>(usable[a])].insertion_order <
               buffer.entries[static_cast<std::size_t>(usable[b])].insertion_order;
    });
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());

    RetrievalResult result;
    result.indices.reserve(take);
    result.similarities.reserve(take);
    result.exemplar_features.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const int idx = usable[order[i]];
        const MemoryEntry& entry = buffer.entries[static_cast<std::size_t>(idx)];
        result.indices.push_back(idx);
        result.similarities.push_back(sims[order[i]]);
        result.exemplar_features.push_back(entry.sample.features[static_cast<std::size_t>(modality)]);
    }

    // Stable softmax over the returned similarities.
    const double peak = *std::max_element(result.similarities.begin(), result.similarities.end());
    result.weights.resize(take);
    double total = 0.0;
    for (std::size_t i = 0; i < take; ++i) {
        result.weights[i] = std::exp(result.similarities[i] - peak);
        total += result.weights[i];
    }
    for (double& w : result.weights) w /= total;
    return result;
}

RetrievalResult retrieve_candidates(const MultiModalSample& query, const MemoryBuffer& buffer,
                                    int modality, int k, long exclude_order) {
    return retrieve_candidates(query.features, query.missing, buffer, modality, k, exclude_order);
}

TaskIndicatorPool make_pool(int modalities, int embedding_dim, int condition_dim,
                            std::mt19937_64& rng) {
    if (modalities < 1 || embedding_dim < 1 || condition_dim < 1) {
        throw ContractError("make_pool: dimensions must be positive");
    }
    TaskIndicatorPool pool;
    const double a = std::sqrt(6.0 / (2.0 * embedding_dim));
    std::uniform_real_distribution<double> dist(-a, a);
    pool.embeddings.resize(static_cast<std::size_t>(modalities));
    for (Vector& e : pool.embeddings) {
        e.resize(static_cast<std::size_t>(embedding_dim));
        for (double& x : e) x = dist(rng);
    }
    pool.conditioner = make_perceptron({embedding_dim, condition_dim}, Activation::kIdentity, rng);
    return pool;
}

PoolGrads PoolGrads::zeros_like(const TaskIndicatorPool& pool) {
    PoolGrads g;
    g.embeddings.resize(pool.embeddings.size());
    for (std::size_t m = 0; m < pool.embeddings.size(); ++m) {
        g.embeddings[m].assign(pool.embeddings[m].size(), 0.0);
    }
    g.conditioner = PerceptronGrads::zeros_like(pool.conditioner);
    return g;
}

void PoolGrads::zero() {
    for (Vector& e : embeddings) std::fill(e.begin(), e.end(), 0.0);
    conditioner.zero();
}

Vector make_condition(const TaskIndicatorPool& pool, const std::vector<std::uint8_t>& mask,
                      int modality, ForwardCache* cache) {
    if (modality < 0 || modality >= static_cast<int>(pool.embeddings.size())) {
        throw ContractError("make_condition: modality index out of range");
    }
    if (modality >= static_cast<int>(mask.size()) || !mask[static_cast<std::size_t>(modality)]) {
        throw ContractError("make_condition: modality " + std::to_string(modality) +
                            " is not missing");
    }
    return perceptron_forward(pool.conditioner, pool.embeddings[static_cast<std::size_t>(modality)],
                              cache);
}

void condition_backward(const TaskIndicatorPool& pool, int modality, const ForwardCache& cache,
                        const Vector& upstream, PoolGrads& acc) {
    const Vector embedding_grad =
        perceptron_backward(pool.conditioner, cache, upstream, acc.conditioner);
    Vector& target = acc.embeddings[static_cast<std::size_t>(modality)];
    for (std::size_t i = 0; i < target.size(); ++i) target[i] += embedding_grad[i];
}

Vector exemplar_prior(const RetrievalResult& retrieval) {
    if (retrieval.exemplar_features.empty()) {
        throw ContractError("exemplar_prior: no exemplars");
    }
    Vector out(retrieval.exemplar_features.front().size(), 0.0);
    for (std::size_t j = 0; j < retrieval.exemplar_features.size(); ++j) {
        const Vector& z = retrieval.exemplar_features[j];
        if (z.size() != out.size()) throw ShapeError("exemplar_prior: exemplar length mismatch");
        const double w = retrieval.weights[j];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * z[i];
    }
    return out;
}

BridgeNetwork make_bridge(const std::vector<int>& feature_dims, int condition_dim, int hidden,
                          Activation activation, std::mt19937_64& rng) {
    int total = 0;
    for (int d : feature_dims) total += d;
    BridgeNetwork bridge;
    bridge.nets.reserve(feature_dims.size());
    for (int d : feature_dims) {
        bridge.nets.push_back(make_perceptron({total + d + condition_dim, hidden, d}, activation,
                                              rng, /*zero_final=*/true));
    }
    return bridge;
}

Vector bridge_impute(const Vector& summary, const Vector& prior, const Vector& condition,
                     const BridgeNetwork& bridge, int modality, ForwardCache* cache,
                     Vector* bridge_input) {
    if (modality < 0 || modality >= static_cast<int>(bridge.nets.size())) {
        throw ContractError("bridge_impute: modality index out of range");
    }
    const PerceptronParams& net = bridge.nets[static_cast<std::size_t>(modality)];
    Vector input;
    input.reserve(summary.size() + prior.size() + condition.size());
    input.insert(input.end(), summary.begin(), summary.end());
    input.insert(input.end(), prior.begin(), prior.end());
    input.insert(input.end(), condition.begin(), condition.end());
    if (static_cast<int>(input.size()) != net.input_dim()) {
        throw ShapeError("bridge_impute: input length " + std::to_string(input.size()) +
                         " vs expected " + std::to_string(net.input_dim()));
    }
    Vector residual = perceptron_forward(net, input, cache);
    if (residual.size() != prior.size()) {
        throw ShapeError("bridge_impute: residual length does not match target modality dim");
    }
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] += prior[i];
    if (bridge_input) *bridge_input = std::move(input);
    return residual;
}

double reconstruction_loss(const Vector& imputed, const Vector& truth) {
    if (imputed.size() != truth.size()) throw ShapeError("reconstruction_loss: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < imputed.size(); ++i) {
        const double d = imputed[i] - truth[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace brima
