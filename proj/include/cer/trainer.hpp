#pragma once

// Mini-batch Adam training of the projection head on triplets.

#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "cer/embedder.hpp"
#include "cer/error.hpp"
#include "cer/mining.hpp"
#include "cer/projection.hpp"
#include "cer/rng.hpp"
#include "cer/triplet_loss.hpp"

namespace cer {

struct TrainConfig {
    double margin = 0.2;
    double learning_rate = 1e-3;
    int epochs = 20;
    int batch_size = 32;
    std::uint64_t seed = 0;
    Metric metric = Metric::cosine;
    // Adam; the only optimizer
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

inline void validate(const TrainConfig& cfg) {
    if (!(cfg.margin > 0.0)) throw ConfigError("training: margin must be > 0");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("training: learning_rate must be > 0");
    if (cfg.epochs < 0) throw ConfigError("training: epochs must be >= 0");
    if (cfg.batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0 && cfg.epsilon > 0.0))
        throw ConfigError("training: invalid Adam constants");
}

/// A triplet resolved to base-space vectors. The pointers must outlive training.
struct TrainingExample {
    const EmbeddingVector* anchor;
    const EmbeddingVector* positive;
    const EmbeddingVector* negative;
    std::string label;  // used in diagnostics
};

struct TrainResult {
    ProjectionHead head;
    std::vector<double> loss_curve;  // mean per-triplet loss of each epoch
};

/// Per epoch: seeded shuffle, then for each mini-batch the mean gradient over
/// its triplets followed by one Adam step. The epoch loss is the mean of the
/// per-triplet losses evaluated just before their batch's update. Returned
/// weights are rounded to single precision.
inline TrainResult train(const ProjectionHead& head0, const std::vector<TrainingExample>& examples,
                         const TrainConfig& cfg) {
    validate(cfg);
    validate(head0);
    TrainResult result{head0, {}};
    if (cfg.epochs == 0) return result;
    if (examples.empty()) throw DataError("training needs at least one triplet");

    ProjectionHead head = head0;
    head.metric = cfg.metric;
    const std::size_t n_params = head.W.size();
    std::vector<double> m(n_params, 0.0), v(n_params, 0.0), grad(n_params);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed);
    std::uint64_t step = 0;
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += bs) {
            const std::size_t end = std::min(begin + bs, order.size());
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t k = begin; k < end; ++k) {
                const TrainingExample& ex = examples[order[k]];
                LossTerms terms;
                std::vector<double> g;
                try {
                    g = loss_gradient(head, *ex.anchor, *ex.positive, *ex.negative, cfg.metric, cfg.margin, &terms);
                } catch (const NumericError& e) {
                    throw NumericError(std::string(e.what()) + " in triplet " + ex.label);
                }
                if (!std::isfinite(terms.loss)) throw NumericError("non-finite loss in triplet " + ex.label);
                for (std::size_t i = 0; i < n_params; ++i) {
                    if (!std::isfinite(g[i])) throw NumericError("non-finite gradient in triplet " + ex.label);
                    grad[i] += g[i];
                }
                epoch_loss += terms.loss;
            }
            const double inv = 1.0 / static_cast<double>(end - begin);
            ++step;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < n_params; ++i) {
                const double gi = grad[i] * inv;
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                head.W[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.epsilon);
            }
        }
        result.loss_curve.push_back(epoch_loss / static_cast<double>(examples.size()));
    }
    round_weights(head);
    head.trained_steps = head0.trained_steps + step;
    result.head = std::move(head);
    return result;
}

/// Resolves triplet ids against pooled base vectors. Anchors are embedded once
/// per distinct anchor text and stored in `anchor_store`.
inline std::vector<TrainingExample> resolve_triplets(const std::vector<Triplet>& triplets,
                                                     const std::map<std::string, EmbeddingVector>& chunk_vectors,
                                                     Embedder& embedder,
                                                     std::map<std::string, EmbeddingVector>& anchor_store) {
    std::vector<TrainingExample> out;
    out.reserve(triplets.size());
    for (const Triplet& t : triplets) {
        auto a = anchor_store.find(t.anchor_text);
        if (a == anchor_store.end()) a = anchor_store.emplace(t.anchor_text, embed_passage(embedder, t.anchor_text)).first;
        const auto p = chunk_vectors.find(t.positive_id);
        const auto n = chunk_vectors.find(t.negative_id);
        if (p == chunk_vectors.end()) throw DataError("triplet references unknown chunk " + t.positive_id);
        if (n == chunk_vectors.end()) throw DataError("triplet references unknown chunk " + t.negative_id);
        out.push_back({&a->second, &p->second, &n->second,
                       "(" + t.claim_id + ", " + t.positive_id + ", " + t.negative_id + ")"});
    }
    return out;
}

}  // namespace cer
