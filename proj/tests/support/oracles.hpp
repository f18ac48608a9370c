#pragma once

// Independent reference computations used as test oracles. Nothing here calls
// into the library's numeric code; inputs are plain vectors and matrices.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // rows

// ---------------------------------------------------------------------------
// Hashing (ASCII-only reference of the builtin embedder)

inline std::uint64_t fnv(const std::string& bytes, std::uint64_t h = 14695981039346656037ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t fnv_le64(std::uint64_t v, std::uint64_t h) {
    std::string bytes;
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    return fnv(bytes, h);
}

inline std::uint64_t splitmix_final(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t feature_hash(const std::string& feature, std::uint64_t seed, std::uint64_t salt) {
    return splitmix_final(fnv(feature, fnv_le64(seed, fnv_le64(salt, 14695981039346656037ULL))));
}

/// Builtin token vector for an ASCII token.
inline Vec hashed_token(const std::string& token, std::size_t dim, std::uint64_t seed) {
    std::string low = token;
    for (char& c : low)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    std::vector<std::string> feats{"T:" + low};
    const std::string padded = "<" + low + ">";
    for (std::size_t n = 3; n <= 5; ++n)
        for (std::size_t i = 0; i + n <= padded.size(); ++i) feats.push_back("G:" + padded.substr(i, n));
    Vec v(dim, 0.0);
    for (const auto& f : feats) {
        const std::size_t idx = feature_hash(f, seed, 0x494e444558ULL) % dim;
        const bool neg = feature_hash(f, seed, 0x5349474eULL) >= (1ULL << 63);
        v[idx] += neg ? -1.0 : 1.0;
    }
    double s = 0;
    for (double x : v) s += x * x;
    if (s == 0) {
        v[feature_hash(feats[0], seed, 0x494e444558ULL) % dim] = 1.0;
        s = 1;
    }
    for (double& x : v) x = static_cast<float>(x / std::sqrt(s));
    return v;
}

// ---------------------------------------------------------------------------
// Linear algebra

inline double dotp(const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double len(const Vec& a) { return std::sqrt(dotp(a, a)); }

inline Vec matvec(const Mat& W, const Vec& x) {
    Vec out;
    for (const Vec& row : W) out.push_back(dotp(row, x));
    return out;
}

inline Vec mean_of(const std::vector<Vec>& vs) {
    Vec m(vs.front().size(), 0.0);
    for (const Vec& v : vs)
        for (std::size_t i = 0; i < v.size(); ++i) m[i] += v[i];
    for (double& x : m) x /= static_cast<double>(vs.size());
    return m;
}

inline double cos_dist(const Vec& a, const Vec& b) { return 1.0 - dotp(a, b) / (len(a) * len(b)); }

inline double l2_dist(const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline double dist(bool cosine, const Vec& a, const Vec& b) { return cosine ? cos_dist(a, b) : l2_dist(a, b); }

inline double sim(bool cosine, const Vec& a, const Vec& b) {
    return cosine ? dotp(a, b) / (len(a) * len(b)) : -l2_dist(a, b);
}

// ---------------------------------------------------------------------------
// Triplet loss and its finite-difference gradient

inline double triplet(const Mat& W, const Vec& a, const Vec& p, const Vec& n, bool cosine, double m) {
    const Vec fa = matvec(W, a), fp = matvec(W, p), fn = matvec(W, n);
    return std::max(0.0, dist(cosine, fa, fp) - dist(cosine, fa, fn) + m);
}

/// Central differences, one W entry at a time.
inline Mat fd_gradient(Mat W, const Vec& a, const Vec& p, const Vec& n, bool cosine, double m, double h) {
    Mat g(W.size(), Vec(W[0].size(), 0.0));
    for (std::size_t r = 0; r < W.size(); ++r) {
        for (std::size_t c = 0; c < W[r].size(); ++c) {
            const double w = W[r][c];
            W[r][c] = w + h;
            const double up = triplet(W, a, p, n, cosine, m);
            W[r][c] = w - h;
            const double down = triplet(W, a, p, n, cosine, m);
            W[r][c] = w;
            g[r][c] = (up - down) / (2 * h);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Retrieval

struct Ranked {
    std::string id;
    double score;
};

/// Scores every entry and fully sorts; score desc then id asc.
inline std::vector<Ranked> full_sort(const std::vector<std::pair<std::string, Vec>>& entries, const Vec& q,
                                     bool cosine, std::size_t k) {
    std::vector<Ranked> all;
    for (const auto& [id, v] : entries) all.push_back({id, cosine ? dotp(q, v) : -l2_dist(q, v)});
    std::sort(all.begin(), all.end(), [](const Ranked& x, const Ranked& y) {
        return x.score > y.score || (x.score == y.score && x.id < y.id);
    });
    if (all.size() > k) all.resize(k);
    return all;
}

inline double precision(const std::vector<std::string>& ranked, const std::set<std::string>& rel, std::size_t k) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) hits += rel.count(ranked[i]);
    return static_cast<double>(hits) / static_cast<double>(k);
}

inline double recall(const std::vector<std::string>& ranked, const std::set<std::string>& rel, std::size_t k) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) hits += rel.count(ranked[i]);
    return static_cast<double>(hits) / static_cast<double>(rel.size());
}

struct Stats {
    std::optional<double> intra_pos, intra_neg, inter;
};

inline Stats pair_stats(const std::vector<Vec>& pos, const std::vector<Vec>& neg, bool cosine) {
    auto intra = [&](const std::vector<Vec>& g) -> std::optional<double> {
        double s = 0;
        int n = 0;
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = 0; j < g.size(); ++j)
                if (i < j) {
                    s += dist(cosine, g[i], g[j]);
                    ++n;
                }
        if (n == 0) return std::nullopt;
        return s / n;
    };
    Stats st{intra(pos), intra(neg), std::nullopt};
    if (!pos.empty() && !neg.empty()) {
        double s = 0;
        for (const Vec& a : pos)
            for (const Vec& b : neg) s += dist(cosine, a, b);
        st.inter = s / static_cast<double>(pos.size() * neg.size());
    }
    return st;
}

// ---------------------------------------------------------------------------
// Occlusion: rebuild the reduced chunk from scratch for every token.

inline std::vector<double> occlusion(const Mat& W, const std::vector<Vec>& tokens, const Vec& q, bool cosine) {
    std::vector<Vec> projected;
    for (const Vec& t : tokens) projected.push_back(matvec(W, t));
    const double base = sim(cosine, q, matvec(W, mean_of(tokens)));
    std::vector<double> out;
    for (std::size_t skip = 0; skip < tokens.size(); ++skip) {
        if (tokens.size() == 1) {
            out.push_back(base);
            continue;
        }
        std::vector<Vec> rest;
        for (std::size_t t = 0; t < tokens.size(); ++t)
            if (t != skip) rest.push_back(tokens[t]);
        const Vec reduced = matvec(W, mean_of(rest));
        if (cosine && len(reduced) <= 1e-12) {
            out.push_back(base);
            continue;
        }
        out.push_back(base - sim(cosine, q, reduced));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mining: enumerate every candidate's hardness, then pick.

struct MineItem {
    std::string id;
    Vec base;
    double subj;
    bool positive;
};

struct Mined {
    std::string positive_id, negative_id;
    double neg_subj, neg_sim;
};

inline std::vector<Mined> mine(const Vec& anchor, const std::vector<MineItem>& items, int n_neg, double l_sim,
                               double l_subj, bool cosine, bool semi_hard, double margin) {
    std::vector<const MineItem*> pos, cand;
    for (const MineItem& it : items) (it.positive ? pos : cand).push_back(&it);
    double lo = 1e300, hi = -1e300;
    for (const MineItem* c : cand) {
        lo = std::min(lo, sim(cosine, anchor, c->base));
        hi = std::max(hi, sim(cosine, anchor, c->base));
    }
    std::map<std::string, double> hard;
    for (const MineItem* c : cand) {
        const double s = sim(cosine, anchor, c->base);
        hard[c->id] = l_sim * (hi > lo ? (s - lo) / (hi - lo) : 0.0) + l_subj * c->subj;
    }
    std::sort(pos.begin(), pos.end(), [](auto* a, auto* b) { return a->id < b->id; });
    std::vector<Mined> out;
    for (const MineItem* p : pos) {
        std::vector<const MineItem*> ok;
        for (const MineItem* c : cand)
            if (!semi_hard || dist(cosine, anchor, c->base) < dist(cosine, anchor, p->base) + margin) ok.push_back(c);
        // selection sort: repeatedly take the hardest remaining
        for (int taken = 0; taken < n_neg && !ok.empty(); ++taken) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < ok.size(); ++i) {
                const double hi_ = hard[ok[i]->id], hb = hard[ok[best]->id];
                if (hi_ > hb || (hi_ == hb && ok[i]->id < ok[best]->id)) best = i;
            }
            out.push_back({p->id, ok[best]->id, ok[best]->subj, sim(cosine, anchor, ok[best]->base)});
            ok.erase(ok.begin() + static_cast<std::ptrdiff_t>(best));
        }
    }
    return out;
}

}  // namespace oracle
