#pragma once

#include "brima/numeric.hpp"

namespace brima {

// Fusion scorer: concatenated modality features (fixed modality order) to a
// single scalar. Encoders are identity maps since features come precomputed.
struct ScoringModel {
    PerceptronParams scorer;
};

Vector concat_slots(const std::vector<const Vector*>& slots);

// Requires every slot filled (observed or imputed).
double predict(const ScoringModel& model, const std::vector<const Vector*>& slots);
double predict_concat(const ScoringModel& model, const Vector& features,
                      ForwardCache* cache = nullptr);

// Mean squared error over a batch of predictions.
double score_loss(const Vector& predicted, const Vector& truth);

struct ObjectiveWeights {
    double memory = 1.0;
    double reconstruction = 1.0;
};

// score + memory * w.memory + reconstruction * w.reconstruction.
double total_objective(double score_component, double memory_component,
                       double reconstruction_component, const ObjectiveWeights& w);

}  // namespace brima
