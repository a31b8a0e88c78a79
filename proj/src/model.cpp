#include "brima/model.hpp"

#include <cmath>

namespace brima {

Vector concat_slots(const std::vector<const Vector*>& slots) {
    std::size_t total = 0;
    for (std::size_t m = 0; m < slots.size(); ++m) {
        if (slots[m] == nullptr || slots[m]->empty()) {
            throw ContractError("predict: modality slot " + std::to_string(m) + " is unfilled");
        }
        total += slots[m]->size();
    }
    Vector out;
    out.reserve(total);
    for (const Vector* s : slots) out.insert(out.end(), s->begin(), s->end());
    return out;
}

double predict(const ScoringModel& model, const std::vector<const Vector*>& slots) {
    return predict_concat(model, concat_slots(slots));
}

double predict_concat(const ScoringModel& model, const Vector& features, ForwardCache* cache) {
    const Vector out = perceptron_forward(model.scorer, features, cache);
    if (out.size() != 1) throw ShapeError("predict: scorer output must be scalar");
    return out[0];
}

double score_loss(const Vector& predicted, const Vector& truth) {
    if (predicted.size() != truth.size()) throw ShapeError("score_loss: length mismatch");
    if (predicted.empty()) throw ContractError("score_loss: empty batch");
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted[i] - truth[i];
        acc += d * d;
    }
    return acc / static_cast<double>(predicted.size());
}

double total_objective(double score_component, double memory_component,
                       double reconstruction_component, const ObjectiveWeights& w) {
    if (!std::isfinite(score_component)) throw NumericError("total_objective: score loss is non-finite");
    if (!std::isfinite(memory_component)) throw NumericError("total_objective: memory loss is non-finite");
    if (!std::isfinite(reconstruction_component)) {
        throw NumericError("total_objective: reconstruction loss is non-finite");
    }
    return score_component + w.memory * memory_component + w.reconstruction * reconstruction_component;
}

}  // namespace brima
