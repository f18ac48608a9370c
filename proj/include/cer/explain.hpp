#pragma once

// Token-level attribution, rationale selection, attribution-aware re-ranking,
// and evidence prompt assembly.

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cer/corpus.hpp"
#include "cer/embedder.hpp"
#include "cer/embedding.hpp"
#include "cer/error.hpp"
#include "cer/index.hpp"
#include "cer/projection.hpp"
#include "cer/subjectivity.hpp"

namespace cer {

enum class AttributionMode { decomposition, occlusion };

inline std::string_view to_string(AttributionMode m) {
    return m == AttributionMode::decomposition ? "decomposition" : "occlusion";
}

struct TokenContribution {
    Token token;
    double contribution = 0.0;
};

struct Attribution {
    std::string chunk_id;
    AttributionMode mode = AttributionMode::decomposition;
    double base_similarity = 0.0;
    std::vector<TokenContribution> token_contribs;
};

struct RationaleSpan {
    std::size_t byte_start = 0;
    std::size_t byte_end = 0;
    double contribution = 0.0;

    bool operator==(const RationaleSpan&) const = default;
};

struct Rationale {
    std::string chunk_id;
    std::vector<RationaleSpan> spans;  // sorted by byte_start
    double coverage = 0.0;             // share of positive contribution mass covered
};

struct RerankConfig {
    double alpha = 1.0;  // base similarity
    double beta = 0.5;   // evidence mass
    double gamma = 0.5;  // subjectivity penalty
    int pool = 50;       // hits retrieved before re-ranking
    double rationale_coverage = 0.8;
    int max_rationale_tokens = 10;
};

inline void validate(const RerankConfig& cfg) {
    if (cfg.alpha < 0.0 || cfg.beta < 0.0 || cfg.gamma < 0.0) throw ConfigError("rerank: weights must be >= 0");
    if (cfg.pool < 1) throw ConfigError("rerank: pool must be >= 1");
    if (cfg.rationale_coverage < 0.0 || cfg.rationale_coverage > 1.0)
        throw ConfigError("rerank: rationale_coverage must lie in [0, 1]");
    if (cfg.max_rationale_tokens < 1) throw ConfigError("rerank: max_rationale_tokens must be >= 1");
}

// ---------------------------------------------------------------------------
// Attribution

/// Exact additive split of cos(f, q) over tokens, where f = W * mean_t(e_t):
///   c_t = <W e_t, q> / (T * |f| * |q|),   sum_t c_t = cos(f, q).
/// `query` is the projected (not normalized) query vector.
inline Attribution attribute_decomposition(const EmbeddingVector& query, std::string chunk_id,
                                           const TokenEmbeddings& te, const ProjectionHead& head) {
    if (head.metric != Metric::cosine)
        throw ConfigError("decomposition attribution needs a cosine head; use occlusion for euclidean");
    if (te.empty()) throw DataError("empty passage");
    const EmbeddingVector f = project(head, pool_mean(te));
    const double nf = norm(f.span());
    const double nq = norm(query.span());
    if (nf <= kDegenerateNorm || nq <= kDegenerateNorm) throw NumericError("degenerate vector");

    Attribution a;
    a.chunk_id = std::move(chunk_id);
    a.mode = AttributionMode::decomposition;
    a.base_similarity = dot(f.span(), query.span()) / (nf * nq);
    const double denom = static_cast<double>(te.size()) * nf * nq;
    for (std::size_t t = 0; t < te.size(); ++t) {
        const EmbeddingVector pt = project(head, te.vectors[t]);
        a.token_contribs.push_back({te.tokens[t], dot(pt.span(), query.span()) / denom});
    }
    return a;
}

inline Attribution attribute_decomposition(std::string_view query_text, const Chunk& chunk, Embedder& embedder,
                                           const ProjectionHead& head) {
    const EmbeddingVector q = project(head, embed_passage(embedder, query_text));
    return attribute_decomposition(q, chunk.chunk_id, embedder.embed_tokens(chunk.text), head);
}

/// c_t = sim(q, f(chunk)) - sim(q, f(chunk without token t)), pooling over the
/// remaining T-1 token vectors. A single-token chunk, or a reduced chunk that is
/// degenerate under cosine, gets c_t = base similarity.
inline Attribution attribute_occlusion(const EmbeddingVector& query, std::string chunk_id, const TokenEmbeddings& te,
                                       const ProjectionHead& head, Metric metric) {
    if (te.empty()) throw DataError("empty passage");
    const std::size_t T = te.size();
    std::vector<EmbeddingVector> projected;
    projected.reserve(T);
    for (const auto& v : te.vectors) projected.push_back(project(head, v));
    EmbeddingVector sum(head.d_out);
    for (const auto& p : projected)
        for (std::size_t i = 0; i < sum.dim(); ++i) sum[i] += p[i];
    EmbeddingVector f(head.d_out);
    for (std::size_t i = 0; i < f.dim(); ++i) f[i] = sum[i] / static_cast<double>(T);

    Attribution a;
    a.chunk_id = std::move(chunk_id);
    a.mode = AttributionMode::occlusion;
    a.base_similarity = similarity(metric, query, f);
    for (std::size_t t = 0; t < T; ++t) {
        double c = a.base_similarity;
        if (T > 1) {
            EmbeddingVector reduced(head.d_out);
            for (std::size_t i = 0; i < reduced.dim(); ++i)
                reduced[i] = (sum[i] - projected[t][i]) / static_cast<double>(T - 1);
            if (metric == Metric::euclidean || norm(reduced.span()) > kDegenerateNorm)
                c = a.base_similarity - similarity(metric, query, reduced);
        }
        a.token_contribs.push_back({te.tokens[t], c});
    }
    return a;
}

inline Attribution attribute_occlusion(std::string_view query_text, const Chunk& chunk, Embedder& embedder,
                                       const ProjectionHead& head, Metric metric) {
    const EmbeddingVector q = project(head, embed_passage(embedder, query_text));
    return attribute_occlusion(q, chunk.chunk_id, embedder.embed_tokens(chunk.text), head, metric);
}

// ---------------------------------------------------------------------------
// Rationales

/// Greedy: positive contributions by descending value (ties by byte_start) until
/// the covered share of positive mass reaches rationale_coverage or
/// max_rationale_tokens are taken.
inline Rationale select_rationale(const Attribution& attr, const RerankConfig& cfg) {
    Rationale r;
    r.chunk_id = attr.chunk_id;
    std::vector<const TokenContribution*> positive;
    double mass = 0.0;
    for (const auto& tc : attr.token_contribs) {
        if (tc.contribution > 0.0) {
            positive.push_back(&tc);
            mass += tc.contribution;
        }
    }
    if (positive.empty()) return r;
    std::sort(positive.begin(), positive.end(), [](const TokenContribution* a, const TokenContribution* b) {
        if (a->contribution != b->contribution) return a->contribution > b->contribution;
        return a->token.byte_start < b->token.byte_start;
    });
    double covered = 0.0;
    for (const TokenContribution* tc : positive) {
        if (static_cast<int>(r.spans.size()) >= cfg.max_rationale_tokens) break;
        if (covered >= cfg.rationale_coverage * mass) break;
        r.spans.push_back({tc->token.byte_start, tc->token.byte_end, tc->contribution});
        covered += tc->contribution;
    }
    r.coverage = std::min(1.0, covered / mass);
    std::sort(r.spans.begin(), r.spans.end(),
              [](const RationaleSpan& a, const RationaleSpan& b) { return a.byte_start < b.byte_start; });
    return r;
}

// ---------------------------------------------------------------------------
// Re-ranking

/// Sum of positive contributions over tokens not covered by the lexicon.
inline double evidence_mass(const Attribution& attr, const SubjectivityLexicon& lex) {
    std::vector<Token> tokens;
    tokens.reserve(attr.token_contribs.size());
    for (const auto& tc : attr.token_contribs) tokens.push_back(tc.token);
    const auto mask = subjective_mask(tokens, lex);
    double mass = 0.0;
    for (std::size_t i = 0; i < attr.token_contribs.size(); ++i)
        if (!mask[i]) mass += std::max(attr.token_contribs[i].contribution, 0.0);
    return mass;
}

struct ScoredHit {
    RetrievalHit hit;  // score = rerank score, rank renumbered
    double base_similarity = 0.0;
    double evidence_mass = 0.0;
    double subjectivity = 0.0;
};

/// score = alpha * base_similarity + beta * evidence_mass - gamma * subjectivity,
/// where base_similarity is the hit's retrieval score. Sorted by score
/// descending, ties by chunk_id.
inline std::vector<ScoredHit> rerank_scored(const std::vector<RetrievalHit>& hits,
                                            const std::map<std::string, Attribution>& attributions,
                                            const std::map<std::string, double>& subjectivity,
                                            const SubjectivityLexicon& lex, const RerankConfig& cfg) {
    validate(cfg);
    std::vector<ScoredHit> out;
    out.reserve(hits.size());
    for (const RetrievalHit& h : hits) {
        const auto a = attributions.find(h.chunk_id);
        if (a == attributions.end()) throw DataError("missing attribution for hit " + h.chunk_id);
        const auto s = subjectivity.find(h.chunk_id);
        if (s == subjectivity.end()) throw DataError("missing subjectivity score for hit " + h.chunk_id);
        ScoredHit sh;
        sh.base_similarity = h.score;
        sh.evidence_mass = evidence_mass(a->second, lex);
        sh.subjectivity = s->second;
        sh.hit.chunk_id = h.chunk_id;
        sh.hit.score = cfg.alpha * sh.base_similarity + cfg.beta * sh.evidence_mass - cfg.gamma * sh.subjectivity;
        out.push_back(std::move(sh));
    }
    std::sort(out.begin(), out.end(), [](const ScoredHit& a, const ScoredHit& b) {
        if (a.hit.score != b.hit.score) return a.hit.score > b.hit.score;
        return a.hit.chunk_id < b.hit.chunk_id;
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].hit.rank = static_cast<int>(i + 1);
    return out;
}

inline std::vector<RetrievalHit> rerank(const std::vector<RetrievalHit>& hits,
                                        const std::map<std::string, Attribution>& attributions,
                                        const std::map<std::string, double>& subjectivity,
                                        const SubjectivityLexicon& lex, const RerankConfig& cfg) {
    std::vector<RetrievalHit> out;
    for (auto& sh : rerank_scored(hits, attributions, subjectivity, lex, cfg)) out.push_back(std::move(sh.hit));
    return out;
}

// ---------------------------------------------------------------------------
// Prompt assembly

struct EvidenceItem {
    std::string chunk_id;
    std::string text;
    Rationale rationale;
};

inline constexpr std::string_view kNoEvidence = "[no evidence retrieved]";

inline constexpr std::string_view kDefaultPromptTemplate =
    "Claim: {claim}\n"
    "\n"
    "Evidence, ranked by evidential support (quoted spans are the tokens that drove each match):\n"
    "{evidence}\n"
    "Answer using only the evidence above and cite passages by their number. "
    "If the evidence does not settle the claim, say so.\n";

namespace detail {

inline std::string quote_rationale(const EvidenceItem& e) {
    std::string out;
    for (const auto& s : e.rationale.spans) {
        if (s.byte_end > e.text.size()) continue;
        if (!out.empty()) out += ' ';
        out += '"' + e.text.substr(s.byte_start, s.byte_end - s.byte_start) + '"';
    }
    return out;
}

inline std::string render_evidence_block(const std::vector<EvidenceItem>& items) {
    if (items.empty()) return std::string(kNoEvidence) + "\n";
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += "[" + std::to_string(i + 1) + "] (" + items[i].chunk_id + ") " + items[i].text + "\n";
        const std::string q = quote_rationale(items[i]);
        out += "    rationale: " + (q.empty() ? std::string("(none)") : q) + "\n";
    }
    return out;
}

/// Parses "evidence_12" style names; returns 0 when `name` lacks the prefix or a valid index.
inline std::size_t indexed_placeholder(std::string_view name, std::string_view prefix) {
    if (name.size() <= prefix.size() || name.substr(0, prefix.size()) != prefix) return 0;
    std::size_t n = 0;
    for (char c : name.substr(prefix.size())) {
        if (c < '0' || c > '9') return 0;
        n = n * 10 + static_cast<std::size_t>(c - '0');
        if (n > 1'000'000) return 0;
    }
    return n;
}

}  // namespace detail

/// Substitutes {claim}, {evidence} (all hits), {evidence_N} and {rationale_N}
/// (1-based). "{{" and "}}" are literal braces. Unknown or unterminated
/// placeholders are a ConfigError.
inline std::string assemble_prompt(std::string_view claim, const std::vector<EvidenceItem>& items,
                                   std::string_view tmpl = kDefaultPromptTemplate) {
    std::string out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        const char c = tmpl[i];
        if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
            out += '{';
            ++i;
            continue;
        }
        if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
            out += '}';
            ++i;
            continue;
        }
        if (c == '}') throw ConfigError("malformed template: stray '}' at offset " + std::to_string(i));
        if (c != '{') {
            out += c;
            continue;
        }
        const auto close = tmpl.find('}', i + 1);
        if (close == std::string_view::npos) throw ConfigError("malformed template: unterminated placeholder");
        const std::string_view name = tmpl.substr(i + 1, close - i - 1);
        if (name == "claim") {
            out += claim;
        } else if (name == "evidence") {
            out += detail::render_evidence_block(items);
        } else if (auto n = detail::indexed_placeholder(name, "evidence_"); n > 0) {
            out += n <= items.size() ? items[n - 1].text : std::string(kNoEvidence);
        } else if (auto m = detail::indexed_placeholder(name, "rationale_"); m > 0) {
            if (m <= items.size()) out += detail::quote_rationale(items[m - 1]);
        } else {
            throw ConfigError("malformed template: unknown placeholder {" + std::string(name) + "}");
        }
        i = close;
    }
    return out;
}

// ---------------------------------------------------------------------------
// End-to-end query with explanations

struct ExplainedHit {
    ScoredHit scored;
    Attribution attribution;
    Rationale rationale;
    const Chunk* chunk = nullptr;
};

/// Retrieves the rerank pool, attributes every hit (decomposition under a cosine
/// index, occlusion otherwise), re-ranks, and keeps the top `k`.
inline std::vector<ExplainedHit> explain_query(std::string_view claim_text, const VectorIndex& index,
                                               const std::map<std::string, const Chunk*>& chunks, Embedder& embedder,
                                               const ProjectionHead& head, const SubjectivityLexicon& lex,
                                               const RerankConfig& cfg, int k) {
    validate(cfg);
    if (k < 0) throw ConfigError("K must be >= 0");
    const auto hits = search_topk(index, claim_text, embedder, head, std::max(cfg.pool, k));
    const EmbeddingVector q = project(head, embed_passage(embedder, claim_text));

    std::map<std::string, Attribution> attrs;
    std::map<std::string, double> subj;
    for (const RetrievalHit& h : hits) {
        const auto it = chunks.find(h.chunk_id);
        if (it == chunks.end()) throw DataError("index references unknown chunk " + h.chunk_id);
        const TokenEmbeddings te = embedder.embed_tokens(it->second->text);
        attrs.emplace(h.chunk_id, index.metric == Metric::cosine && head.metric == Metric::cosine
                                      ? attribute_decomposition(q, h.chunk_id, te, head)
                                      : attribute_occlusion(q, h.chunk_id, te, head, index.metric));
        subj.emplace(h.chunk_id, subjectivity_score(*it->second, lex));
    }
    auto scored = rerank_scored(hits, attrs, subj, lex, cfg);
    if (scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));

    std::vector<ExplainedHit> out;
    for (auto& s : scored) {
        ExplainedHit eh;
        eh.attribution = std::move(attrs.at(s.hit.chunk_id));
        eh.rationale = select_rationale(eh.attribution, cfg);
        eh.chunk = chunks.at(s.hit.chunk_id);
        eh.scored = std::move(s);
        out.push_back(std::move(eh));
    }
    return out;
}

/// {"claim", "hits": [{"chunk_id", "base_similarity", "rerank_score", "subjectivity",
///                     "rationale": [{"start","end","text","contribution"}], "coverage"}]}
inline nlohmann::ordered_json explanation_json(std::string_view claim, const std::vector<ExplainedHit>& hits) {
    nlohmann::ordered_json j;
    j["claim"] = std::string(claim);
    j["hits"] = nlohmann::ordered_json::array();
    for (const ExplainedHit& h : hits) {
        nlohmann::ordered_json spans = nlohmann::ordered_json::array();
        for (const RationaleSpan& s : h.rationale.spans) {
            spans.push_back({{"start", s.byte_start},
                             {"end", s.byte_end},
                             {"text", h.chunk->text.substr(s.byte_start, s.byte_end - s.byte_start)},
                             {"contribution", s.contribution}});
        }
        j["hits"].push_back({{"chunk_id", h.scored.hit.chunk_id},
                             {"base_similarity", h.scored.base_similarity},
                             {"rerank_score", h.scored.hit.score},
                             {"subjectivity", h.scored.subjectivity},
                             {"rationale", std::move(spans)},
                             {"coverage", h.rationale.coverage}});
    }
    return j;
}

inline std::vector<EvidenceItem> evidence_items(const std::vector<ExplainedHit>& hits) {
    std::vector<EvidenceItem> items;
    for (const ExplainedHit& h : hits) items.push_back({h.scored.hit.chunk_id, h.chunk->text, h.rationale});
    return items;
}

}  // namespace cer
