#pragma once

#include <random>
#include <vector>

#include "brima/mro.hpp"
#include "brima/numeric.hpp"

namespace brima {

// Fixed-length query layout: modality slots concatenated in index order,
// observed slots carry their features, missing slots are zero-filled.
Vector observed_summary(const std::vector<Vector>& features,
                        const std::vector<std::uint8_t>& missing,
                        const std::vector<int>& feature_dims);
Vector observed_summary(const MultiModalSample& sample, const std::vector<int>& feature_dims);

// Zero when either vector has zero norm.
double cosine_similarity(const Vector& a, const Vector& b);

// Mean per-modality cosine over the query's observed modalities.
double buffer_similarity(const std::vector<Vector>& query_features,
                         const std::vector<std::uint8_t>& query_missing,
                         const MemoryEntry& entry);

struct RetrievalResult {
    std::vector<int> indices;             // positions in the buffer, best first
    Vector similarities;                  // aligned with indices
    Vector weights;                       // softmax over similarities
    std::vector<Vector> exemplar_features;  // target-modality features, aligned
};

// Top-k exemplars by similarity, ties broken by older insertion first.
// `exclude_order` skips the entry with that insertion order (used when the
// query itself lives in the buffer).
RetrievalResult retrieve_candidates(const std::vector<Vector>& query_features,
                                    const std::vector<std::uint8_t>& query_missing,
                                    const MemoryBuffer& buffer, int modality, int k,
                                    long exclude_order = -1);
RetrievalResult retrieve_candidates(const MultiModalSample& query, const MemoryBuffer& buffer,
                                    int modality, int k, long exclude_order = -1);

// One learnable embedding per modality plus the conditioning network that
// maps an embedding to the bridge's conditioning vector.
struct TaskIndicatorPool {
    std::vector<Vector> embeddings;
    PerceptronParams conditioner;
};

TaskIndicatorPool make_pool(int modalities, int embedding_dim, int condition_dim,
                            std::mt19937_64& rng);

struct PoolGrads {
    std::vector<Vector> embeddings;
    PerceptronGrads conditioner;

    static PoolGrads zeros_like(const TaskIndicatorPool& pool);
    void zero();
};

// Conditioning vector for a modality that is actually missing under `mask`.
Vector make_condition(const TaskIndicatorPool& pool, const std::vector<std::uint8_t>& mask,
                      int modality, ForwardCache* cache = nullptr);

// Backward through the conditioner into both its parameters and the
// modality's pool embedding.
void condition_backward(const TaskIndicatorPool& pool, int modality, const ForwardCache& cache,
                        const Vector& upstream, PoolGrads& acc);

// Softmax-weighted average of the retrieved exemplar features.
Vector exemplar_prior(const RetrievalResult& retrieval);

// One residual network per modality so heterogeneous feature dims stay
// type-correct; each maps concat(summary, prior, condition) to a residual
// of the target modality's dim. Final layers start at exactly zero.
struct BridgeNetwork {
    std::vector<PerceptronParams> nets;
};

BridgeNetwork make_bridge(const std::vector<int>& feature_dims, int condition_dim, int hidden,
                          Activation activation, std::mt19937_64& rng);

// prior + B(concat(summary, prior, condition)) for the given modality.
Vector bridge_impute(const Vector& summary, const Vector& prior, const Vector& condition,
                     const BridgeNetwork& bridge, int modality, ForwardCache* cache = nullptr,
                     Vector* bridge_input = nullptr);

// Squared Euclidean distance between imputed and ground-truth features.
double reconstruction_loss(const Vector& imputed, const Vector& truth);

}  // namespace brima
