#pragma once

// Seeded two-cluster corpus in base-embedding space. Every claim owns a topic
// vector; its evidence chunks sit on one side of a shared "evidence direction"
// and its distractors on the other, so positives and negatives overlap heavily
// until a projection learns to amplify that direction.

#include <cmath>
#include <string>
#include <vector>

#include "cer/eval.hpp"
#include "cer/mining.hpp"
#include "cer/rng.hpp"

namespace synth {

struct Params {
    std::size_t dim = 32;
    int topics = 50;
    int positives_per_topic = 2;
    int negatives_per_topic = 2;
    double topic_scale = 0.12;
    double shift = 0.1;     // distance along the evidence direction
    double noise = 0.025;
    double offset = 0.25;   // common offset, orthogonal to the evidence direction
    std::uint64_t seed = 0;
};

struct Corpus {
    std::vector<cer::MiningClaim> claims;
    std::vector<cer::MiningItem> items;
    std::vector<cer::EmbeddingVector> positives;
    std::vector<cer::EmbeddingVector> negatives;
};

inline std::string id(const char* prefix, int topic, int k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%02d-%d", prefix, topic, k);
    return buf;
}

inline Corpus make(const Params& p) {
    cer::Rng rng(p.seed);
    const std::size_t d = p.dim;
    std::vector<double> delta(d), offset(d);
    for (auto& x : delta) x = (rng.below(2) ? 1.0 : -1.0) / std::sqrt(static_cast<double>(d));
    // offset: alternate signs so that it is orthogonal to delta when d is even
    for (std::size_t i = 0; i < d; ++i) offset[i] = delta[i] * (i % 2 == 0 ? 1.0 : -1.0);
    for (auto& x : offset) x *= p.offset;

    auto sample = [&](const std::vector<double>& center, double sign) {
        cer::EmbeddingVector v(d);
        for (std::size_t i = 0; i < d; ++i) v[i] = center[i] + sign * p.shift * delta[i] + p.noise * rng.normal();
        return v;
    };

    Corpus c;
    for (int t = 0; t < p.topics; ++t) {
        std::vector<double> topic(d);
        for (std::size_t i = 0; i < d; ++i) topic[i] = p.topic_scale * rng.normal() + offset[i];
        const std::string claim_id = id("claim", t, 0);
        c.claims.push_back({{claim_id, "claim " + claim_id}, sample(topic, 1.0)});
        for (int k = 0; k < p.positives_per_topic; ++k) {
            auto v = sample(topic, 1.0);
            c.positives.push_back(v);
            c.items.push_back({id("pos", t, k), v, 0.1 * rng.uniform(), {{claim_id, cer::Relevance::positive}}});
        }
        for (int k = 0; k < p.negatives_per_topic; ++k) {
            auto v = sample(topic, -1.0);
            c.negatives.push_back(v);
            c.items.push_back(
                {id("neg", t, k), v, 0.3 + 0.3 * rng.uniform(), {{claim_id, cer::Relevance::negative}}});
        }
    }
    return c;
}

}  // namespace synth
