#pragma once

// Subjectivity-aware hard-negative mining.
//
// For every (claim, positive) pair the candidate pool is every chunk not
// labeled positive for the claim. Each candidate gets
//
//   hardness = lambda_sim * simrank + lambda_subj * subjectivity
//
// where simrank is the candidate's base similarity to the claim, min-max
// normalized over the pool. The top-N candidates become negatives.

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cer/corpus.hpp"
#include "cer/embedder.hpp"
#include "cer/embedding.hpp"
#include "cer/error.hpp"
#include "cer/subjectivity.hpp"

namespace cer {

struct Triplet {
    std::string claim_id;
    std::string anchor_text;
    std::string positive_id;
    std::string negative_id;
    double neg_subjectivity = 0.0;
    double neg_base_sim = 0.0;
    double hardness = 0.0;  // not serialized

    bool operator==(const Triplet& o) const {
        return claim_id == o.claim_id && anchor_text == o.anchor_text && positive_id == o.positive_id &&
               negative_id == o.negative_id && neg_subjectivity == o.neg_subjectivity &&
               neg_base_sim == o.neg_base_sim;
    }
};

struct MiningConfig {
    int negatives_per_anchor = 4;
    double lambda_sim = 0.5;
    double lambda_subj = 0.5;
    bool semi_hard_only = false;
};

inline void validate(const MiningConfig& cfg) {
    if (cfg.negatives_per_anchor < 1) throw ConfigError("mining: negatives_per_anchor must be >= 1");
    if (cfg.lambda_sim < 0.0 || cfg.lambda_subj < 0.0) throw ConfigError("mining: lambdas must be non-negative");
    if (!(cfg.lambda_sim + cfg.lambda_subj > 0.0)) throw ConfigError("mining: lambda_sim + lambda_subj must be > 0");
}

/// A chunk reduced to what mining needs.
struct MiningItem {
    std::string chunk_id;
    EmbeddingVector base;  // pooled, unprojected
    double subjectivity = 0.0;
    LabelMap labels;

    bool is_positive_for(const std::string& claim_id) const {
        auto it = labels.find(claim_id);
        return it != labels.end() && it->second == Relevance::positive;
    }
};

struct MiningClaim {
    Claim claim;
    EmbeddingVector anchor;  // pooled, unprojected
};

/// Mining over precomputed vectors. `metric` and `margin` define base
/// similarity and the optional semi-hard filter
/// distance(anchor, neg) < distance(anchor, pos) + margin, which is applied to
/// the pool before the top-N cut.
inline std::vector<Triplet> mine_triplets(std::vector<MiningClaim> claims, const std::vector<MiningItem>& items,
                                          const MiningConfig& cfg, Metric metric, double margin) {
    validate(cfg);
    std::sort(claims.begin(), claims.end(),
              [](const MiningClaim& a, const MiningClaim& b) { return a.claim.claim_id < b.claim.claim_id; });

    std::vector<Triplet> out;
    for (const MiningClaim& mc : claims) {
        const std::string& cid = mc.claim.claim_id;
        std::vector<const MiningItem*> positives;
        std::vector<const MiningItem*> pool;
        for (const MiningItem& it : items) (it.is_positive_for(cid) ? positives : pool).push_back(&it);
        if (positives.empty()) throw DataError("claim \"" + cid + "\" has no positively labeled chunk");
        if (pool.empty()) throw DataError("claim \"" + cid + "\" has an empty negative candidate pool");
        std::sort(positives.begin(), positives.end(),
                  [](const MiningItem* a, const MiningItem* b) { return a->chunk_id < b->chunk_id; });

        std::vector<double> sims(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i) sims[i] = similarity(metric, mc.anchor, pool[i]->base);
        const auto [lo_it, hi_it] = std::minmax_element(sims.begin(), sims.end());
        const double lo = *lo_it;
        const double span = *hi_it - lo;

        struct Scored {
            const MiningItem* item;
            double sim;
            double hardness;
            double dist;
        };
        std::vector<Scored> scored;
        scored.reserve(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const double simrank = span > 0.0 ? (sims[i] - lo) / span : 0.0;
            const double hardness = cfg.lambda_sim * simrank + cfg.lambda_subj * pool[i]->subjectivity;
            const double dist = cfg.semi_hard_only ? distance(metric, mc.anchor, pool[i]->base) : 0.0;
            scored.push_back({pool[i], sims[i], hardness, dist});
        }
        std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
            if (a.hardness != b.hardness) return a.hardness > b.hardness;
            return a.item->chunk_id < b.item->chunk_id;
        });

        for (const MiningItem* pos : positives) {
            const double limit = cfg.semi_hard_only ? distance(metric, mc.anchor, pos->base) + margin : 0.0;
            int taken = 0;
            for (const Scored& s : scored) {
                if (taken == cfg.negatives_per_anchor) break;
                if (cfg.semi_hard_only && !(s.dist < limit)) continue;
                out.push_back({cid, mc.claim.text, pos->chunk_id, s.item->chunk_id, s.item->subjectivity, s.sim,
                               s.hardness});
                ++taken;
            }
        }
    }
    return out;
}

/// Embeds claims and chunks (base space) and scores chunk subjectivity, then mines.
inline std::vector<Triplet> mine_triplets(const std::vector<Claim>& claims, const std::vector<Chunk>& chunks,
                                          Embedder& embedder, const SubjectivityLexicon& lex,
                                          const MiningConfig& cfg, Metric metric, double margin) {
    std::vector<MiningItem> items;
    items.reserve(chunks.size());
    std::vector<std::string> texts;
    for (const Chunk& c : chunks) texts.push_back(c.text);
    auto embedded = embedder.embed_batch(texts);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        items.push_back({chunks[i].chunk_id, pool_mean(embedded[i]), subjectivity_score(chunks[i], lex),
                         chunks[i].labels});
    }
    std::vector<MiningClaim> mcs;
    for (const Claim& c : claims) {
        auto te = embedder.embed_tokens(c.text);
        if (te.empty()) throw DataError("claim \"" + c.claim_id + "\" has no tokens");
        mcs.push_back({c, pool_mean(te)});
    }
    return mine_triplets(std::move(mcs), items, cfg, metric, margin);
}

inline void save_triplets(const std::vector<Triplet>& triplets, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    for (const Triplet& t : triplets) {
        nlohmann::ordered_json j = {{"claim_id", t.claim_id},
                                    {"anchor_text", t.anchor_text},
                                    {"positive_id", t.positive_id},
                                    {"negative_id", t.negative_id},
                                    {"neg_subjectivity", t.neg_subjectivity},
                                    {"neg_base_sim", t.neg_base_sim}};
        out << j.dump() << '\n';
    }
    if (!out) throw DataError("write failed for " + path);
}

inline std::vector<Triplet> load_triplets(const std::string& path) {
    std::vector<Triplet> out;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
        Triplet t;
        t.claim_id = detail::require_string(j, "claim_id", line_no);
        t.anchor_text = detail::require_string(j, "anchor_text", line_no);
        t.positive_id = detail::require_string(j, "positive_id", line_no);
        t.negative_id = detail::require_string(j, "negative_id", line_no);
        t.neg_subjectivity = j.at("neg_subjectivity").get<double>();
        t.neg_base_sim = j.at("neg_base_sim").get<double>();
        if (t.positive_id == t.negative_id)
            throw DataError(path + ": line " + std::to_string(line_no) + ": positive_id equals negative_id");
        if (t.neg_subjectivity < 0.0 || t.neg_subjectivity > 1.0)
            throw DataError(path + ": line " + std::to_string(line_no) + ": neg_subjectivity outside [0,1]");
        out.push_back(std::move(t));
    });
    return out;
}

}  // namespace cer
