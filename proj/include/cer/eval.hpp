#pragma once

// Retrieval metrics, embedding-space separation statistics, PCA export, and
// the evaluation report.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cer/corpus.hpp"
#include "cer/embedder.hpp"
#include "cer/embedding.hpp"
#include "cer/error.hpp"
#include "cer/explain.hpp"
#include "cer/index.hpp"
#include "cer/log.hpp"
#include "cer/projection.hpp"
#include "cer/rng.hpp"
#include "cer/subjectivity.hpp"

namespace cer {

// ---------------------------------------------------------------------------
// P@K / R@K

namespace detail {
inline std::size_t relevant_in_top(const std::vector<RetrievalHit>& hits, const std::set<std::string>& relevant,
                                   int k) {
    std::size_t found = 0;
    const std::size_t n = std::min(hits.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) found += relevant.count(hits[i].chunk_id);
    return found;
}
}  // namespace detail

/// |top-K ∩ relevant| / K; the denominator is K even with fewer hits.
inline double precision_at_k(const std::vector<RetrievalHit>& hits, const std::set<std::string>& relevant, int k) {
    if (k < 1) throw ConfigError("K must be >= 1");
    return static_cast<double>(detail::relevant_in_top(hits, relevant, k)) / static_cast<double>(k);
}

inline double recall_at_k(const std::vector<RetrievalHit>& hits, const std::set<std::string>& relevant, int k) {
    if (k < 1) throw ConfigError("K must be >= 1");
    if (relevant.empty()) throw DataError("recall undefined for an empty relevant set");
    return static_cast<double>(detail::relevant_in_top(hits, relevant, k)) / static_cast<double>(relevant.size());
}

// ---------------------------------------------------------------------------
// Separation statistics

struct DistanceStats {
    std::optional<double> intra_pos;  // mean over unordered positive pairs
    std::optional<double> intra_neg;  // mean over unordered negative pairs
    std::optional<double> inter;      // mean over all positive x negative pairs
};

inline DistanceStats pairwise_distance_stats(const std::vector<EmbeddingVector>& pos,
                                             const std::vector<EmbeddingVector>& neg, Metric metric) {
    auto intra = [&](const std::vector<EmbeddingVector>& xs) -> std::optional<double> {
        if (xs.size() < 2) return std::nullopt;
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < xs.size(); ++i)
            for (std::size_t j = i + 1; j < xs.size(); ++j, ++n) sum += distance(metric, xs[i], xs[j]);
        return sum / static_cast<double>(n);
    };
    DistanceStats s;
    s.intra_pos = intra(pos);
    s.intra_neg = intra(neg);
    if (!pos.empty() && !neg.empty()) {
        double sum = 0.0;
        for (const auto& p : pos)
            for (const auto& q : neg) sum += distance(metric, p, q);
        s.inter = sum / static_cast<double>(pos.size() * neg.size());
    }
    return s;
}

// ---------------------------------------------------------------------------
// PCA

enum class PointLabel { pos, neg };

inline std::string_view to_string(PointLabel l) { return l == PointLabel::pos ? "pos" : "neg"; }

struct ProjectedPoint {
    double x = 0.0;
    double y = 0.0;
    PointLabel label = PointLabel::pos;
};

struct PcaOptions {
    int max_iterations = 200;
    double tolerance = 1e-9;
    std::uint64_t seed = 0;
};

namespace detail {

/// Top eigenpair of a symmetric matrix by power iteration, kept orthogonal to
/// `previous`. Returns an empty vector when the matrix has no remaining mass.
inline std::vector<double> power_iteration(const std::vector<double>& cov, std::size_t d,
                                           const std::vector<std::vector<double>>& previous, double scale,
                                           const PcaOptions& opt, Rng& rng, double& eigenvalue) {
    auto orthogonalize = [&](std::vector<double>& v) {
        for (const auto& p : previous) {
            const double c = dot(v, p);
            for (std::size_t i = 0; i < d; ++i) v[i] -= c * p[i];
        }
    };
    auto matvec = [&](const std::vector<double>& v) {
        std::vector<double> w(d, 0.0);
        for (std::size_t r = 0; r < d; ++r) w[r] = dot(std::span<const double>(cov.data() + r * d, d), v);
        return w;
    };
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    orthogonalize(v);
    double n = norm(v);
    if (n == 0.0) return {};
    for (double& x : v) x /= n;

    for (int it = 0; it < opt.max_iterations; ++it) {
        std::vector<double> w = matvec(v);
        orthogonalize(w);
        const double wn = norm(w);
        if (wn <= 1e-12 * scale) return {};
        for (double& x : w) x /= wn;
        double diff_same = 0.0, diff_flip = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            diff_same += (w[i] - v[i]) * (w[i] - v[i]);
            diff_flip += (w[i] + v[i]) * (w[i] + v[i]);
        }
        v = std::move(w);
        if (std::sqrt(std::min(diff_same, diff_flip)) < opt.tolerance) break;
    }
    const auto cv = matvec(v);
    eigenvalue = dot(v, cv);
    if (eigenvalue <= 1e-12 * scale) return {};
    // sign convention: largest-magnitude coordinate positive
    std::size_t arg = 0;
    for (std::size_t i = 1; i < d; ++i)
        if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    if (v[arg] < 0.0)
        for (double& x : v) x = -x;
    return v;
}

}  // namespace detail

struct PcaResult {
    std::vector<ProjectedPoint> points;
    std::vector<std::vector<double>> components;  // up to two unit vectors
    std::vector<double> variances;                // eigenvalues of the sample covariance
};

/// Centers the data and projects onto the top two principal directions
/// (sample covariance, power iteration with deflation). Missing components
/// (rank < 2) project to 0.
inline PcaResult pca(const std::vector<EmbeddingVector>& vectors, const std::vector<PointLabel>& labels,
                     const PcaOptions& opt = {}) {
    if (vectors.size() < 2) throw DataError("PCA needs at least two vectors");
    if (labels.size() != vectors.size()) throw ConfigError("PCA labels must align with vectors");
    const std::size_t d = vectors.front().dim();
    const std::size_t n = vectors.size();
    std::vector<double> mean(d, 0.0);
    for (const auto& v : vectors) {
        if (v.dim() != d) throw ConfigError("PCA vectors disagree on dimension");
        for (std::size_t i = 0; i < d; ++i) mean[i] += v[i];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    std::vector<std::vector<double>> centered(n, std::vector<double>(d));
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < d; ++i) centered[k][i] = vectors[k][i] - mean[i];

    std::vector<double> cov(d * d, 0.0);
    for (const auto& x : centered)
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) cov[r * d + c] += x[r] * x[c];
    double trace = 0.0;
    for (double& c : cov) c /= static_cast<double>(n - 1);
    for (std::size_t i = 0; i < d; ++i) trace += cov[i * d + i];

    PcaResult res;
    Rng rng(opt.seed);
    if (trace > 0.0) {
        for (int comp = 0; comp < 2 && comp < static_cast<int>(d); ++comp) {
            double lambda = 0.0;
            auto v = detail::power_iteration(cov, d, res.components, trace, opt, rng, lambda);
            if (v.empty()) break;
            // deflate
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t c = 0; c < d; ++c) cov[r * d + c] -= lambda * v[r] * v[c];
            res.components.push_back(std::move(v));
            res.variances.push_back(lambda);
        }
    }
    for (std::size_t k = 0; k < n; ++k) {
        ProjectedPoint p;
        p.label = labels[k];
        if (res.components.size() > 0) p.x = dot(centered[k], res.components[0]);
        if (res.components.size() > 1) p.y = dot(centered[k], res.components[1]);
        res.points.push_back(p);
    }
    return res;
}

inline std::vector<ProjectedPoint> pca_project_2d(const std::vector<EmbeddingVector>& vectors,
                                                  const std::vector<PointLabel>& labels, const PcaOptions& opt = {}) {
    return pca(vectors, labels, opt).points;
}

inline std::string projection_csv(const std::vector<ProjectedPoint>& points) {
    std::string out = "x,y,label\n";
    char buf[96];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%s\n", p.x, p.y, std::string(to_string(p.label)).c_str());
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report

struct QueryEval {
    std::string claim_id;
    std::size_t n_relevant = 0;
    std::map<int, double> precision_at_k;
    std::map<int, double> recall_at_k;
    std::map<int, double> reranked_precision_at_k;
    std::map<int, double> reranked_recall_at_k;
};

struct EvalReport {
    std::vector<QueryEval> per_query;
    std::map<int, double> precision_at_k;  // macro averages, retrieval stage
    std::map<int, double> recall_at_k;
    std::map<int, double> reranked_precision_at_k;  // macro averages after re-ranking
    std::map<int, double> reranked_recall_at_k;
    std::optional<double> intra_pos;  // under `metric`
    std::optional<double> intra_neg;
    std::optional<double> inter;
    std::map<Metric, DistanceStats> distance_stats;  // both metrics
    Metric metric = Metric::cosine;
    std::size_t n_queries = 0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    std::string config_hash;
};

/// Chunk groups used for separation statistics: positive for any claim, or
/// labeled negative for some claim and positive for none.
struct LabeledGroups {
    std::vector<const Chunk*> positives;
    std::vector<const Chunk*> negatives;
};

inline LabeledGroups split_by_label(const std::vector<Chunk>& chunks) {
    LabeledGroups g;
    for (const Chunk& c : chunks) {
        bool pos = false, neg = false;
        for (const auto& [claim, rel] : c.labels) {
            pos = pos || rel == Relevance::positive;
            neg = neg || rel == Relevance::negative;
        }
        if (pos) {
            g.positives.push_back(&c);
        } else if (neg) {
            g.negatives.push_back(&c);
        }
    }
    return g;
}

struct EvalOptions {
    std::vector<int> ks{1, 5, 10};
    bool rerank = true;
    RerankConfig rerank_cfg;
    std::string config_hash;
};

inline EvalReport run_eval(const std::vector<Chunk>& chunks, std::vector<Claim> claims, const VectorIndex& index,
                           Embedder& embedder, const ProjectionHead& head, const SubjectivityLexicon& lex,
                           const EvalOptions& opt) {
    if (opt.ks.empty()) throw ConfigError("eval needs at least one K");
    for (int k : opt.ks)
        if (k < 1) throw ConfigError("eval K values must be >= 1");
    const int max_k = *std::max_element(opt.ks.begin(), opt.ks.end());
    std::sort(claims.begin(), claims.end(), [](const Claim& a, const Claim& b) { return a.claim_id < b.claim_id; });

    std::map<std::string, const Chunk*> by_id;
    for (const Chunk& c : chunks) by_id.emplace(c.chunk_id, &c);

    EvalReport rep;
    rep.metric = index.metric;
    rep.config_hash = opt.config_hash;
    for (const Claim& claim : claims) {
        std::set<std::string> relevant;
        for (const Chunk& c : chunks)
            if (c.is_positive_for(claim.claim_id)) relevant.insert(c.chunk_id);
        if (relevant.empty()) {
            log::warn("claim " + claim.claim_id + " has no relevant chunks; excluded from evaluation");
            continue;
        }
        QueryEval q;
        q.claim_id = claim.claim_id;
        q.n_relevant = relevant.size();
        const auto hits = search_topk(index, claim.text, embedder, head, max_k);
        for (int k : opt.ks) {
            q.precision_at_k[k] = precision_at_k(hits, relevant, k);
            q.recall_at_k[k] = recall_at_k(hits, relevant, k);
        }
        if (opt.rerank) {
            const auto explained = explain_query(claim.text, index, by_id, embedder, head, lex, opt.rerank_cfg, max_k);
            std::vector<RetrievalHit> reranked;
            for (const auto& e : explained) reranked.push_back(e.scored.hit);
            for (int k : opt.ks) {
                q.reranked_precision_at_k[k] = precision_at_k(reranked, relevant, k);
                q.reranked_recall_at_k[k] = recall_at_k(reranked, relevant, k);
            }
        }
        rep.per_query.push_back(std::move(q));
    }
    if (rep.per_query.empty()) throw DataError("no evaluable claims (none has a positively labeled chunk)");
    rep.n_queries = rep.per_query.size();

    auto macro = [&](auto member) {
        std::map<int, double> out;
        for (const auto& q : rep.per_query)
            for (const auto& [k, v] : q.*member) out[k] += v;
        for (auto& [k, v] : out) v /= static_cast<double>(rep.n_queries);
        return out;
    };
    rep.precision_at_k = macro(&QueryEval::precision_at_k);
    rep.recall_at_k = macro(&QueryEval::recall_at_k);
    rep.reranked_precision_at_k = macro(&QueryEval::reranked_precision_at_k);
    rep.reranked_recall_at_k = macro(&QueryEval::reranked_recall_at_k);

    const LabeledGroups groups = split_by_label(chunks);
    rep.n_pos = groups.positives.size();
    rep.n_neg = groups.negatives.size();
    auto projected = [&](const std::vector<const Chunk*>& cs) {
        std::vector<EmbeddingVector> out;
        for (const Chunk* c : cs) out.push_back(project(head, embed_passage(embedder, c->text)));
        return out;
    };
    const auto pos = projected(groups.positives);
    const auto neg = projected(groups.negatives);
    for (Metric m : {Metric::cosine, Metric::euclidean}) rep.distance_stats[m] = pairwise_distance_stats(pos, neg, m);
    const DistanceStats& primary = rep.distance_stats.at(rep.metric);
    rep.intra_pos = primary.intra_pos;
    rep.intra_neg = primary.intra_neg;
    rep.inter = primary.inter;
    return rep;
}

namespace detail {

inline nlohmann::ordered_json k_map_json(const std::map<int, double>& m) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m) j[std::to_string(k)] = v;
    return j;
}

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json stats_json(const DistanceStats& s) {
    return {{"intra_pos", optional_json(s.intra_pos)},
            {"intra_neg", optional_json(s.intra_neg)},
            {"inter", optional_json(s.inter)}};
}

inline std::string fmt_optional(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

}  // namespace detail

inline nlohmann::ordered_json report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["config_hash"] = r.config_hash;
    j["averaging"] = "macro";
    j["metric"] = std::string(to_string(r.metric));
    j["n_queries"] = r.n_queries;
    j["n_pos"] = r.n_pos;
    j["n_neg"] = r.n_neg;
    j["precision_at_k"] = detail::k_map_json(r.precision_at_k);
    j["recall_at_k"] = detail::k_map_json(r.recall_at_k);
    j["reranked_precision_at_k"] = detail::k_map_json(r.reranked_precision_at_k);
    j["reranked_recall_at_k"] = detail::k_map_json(r.reranked_recall_at_k);
    j["intra_pos"] = detail::optional_json(r.intra_pos);
    j["intra_neg"] = detail::optional_json(r.intra_neg);
    j["inter"] = detail::optional_json(r.inter);
    j["distance_stats"] = nlohmann::ordered_json::object();
    for (const auto& [m, s] : r.distance_stats) j["distance_stats"][std::string(to_string(m))] = detail::stats_json(s);
    j["per_query"] = nlohmann::ordered_json::array();
    for (const auto& q : r.per_query) {
        j["per_query"].push_back({{"claim_id", q.claim_id},
                                  {"n_relevant", q.n_relevant},
                                  {"precision_at_k", detail::k_map_json(q.precision_at_k)},
                                  {"recall_at_k", detail::k_map_json(q.recall_at_k)},
                                  {"reranked_precision_at_k", detail::k_map_json(q.reranked_precision_at_k)},
                                  {"reranked_recall_at_k", detail::k_map_json(q.reranked_recall_at_k)}});
    }
    return j;
}

inline std::string report_table(const EvalReport& r) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "metric=%s  queries=%zu  positives=%zu  negatives=%zu  averaging=macro\n",
                  std::string(to_string(r.metric)).c_str(), r.n_queries, r.n_pos, r.n_neg);
    out += buf;
    if (!r.config_hash.empty()) out += "config=" + r.config_hash + "\n";
    out += "\n";
    std::snprintf(buf, sizeof buf, "%-6s %10s %10s %14s %14s\n", "K", "P@K", "R@K", "P@K rerank", "R@K rerank");
    out += buf;
    for (const auto& [k, p] : r.precision_at_k) {
        auto get = [&](const std::map<int, double>& m) {
            auto it = m.find(k);
            return it == m.end() ? std::optional<double>{} : std::optional<double>{it->second};
        };
        std::snprintf(buf, sizeof buf, "%-6d %10.4f %10.4f %14s %14s\n", k, p, r.recall_at_k.at(k),
                      detail::fmt_optional(get(r.reranked_precision_at_k)).c_str(),
                      detail::fmt_optional(get(r.reranked_recall_at_k)).c_str());
        out += buf;
    }
    out += "\n";
    std::snprintf(buf, sizeof buf, "%-10s %10s %10s %10s\n", "distance", "intra_pos", "intra_neg", "inter");
    out += buf;
    for (const auto& [m, s] : r.distance_stats) {
        std::snprintf(buf, sizeof buf, "%-10s %10s %10s %10s\n", std::string(to_string(m)).c_str(),
                      detail::fmt_optional(s.intra_pos).c_str(), detail::fmt_optional(s.intra_neg).c_str(),
                      detail::fmt_optional(s.inter).c_str());
        out += buf;
    }
    return out;
}

}  // namespace cer
