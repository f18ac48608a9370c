#pragma once

// Embedding vectors, mean pooling, and the two similarity metrics.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cer/corpus.hpp"
#include "cer/error.hpp"

namespace cer {

/// Norms at or below this are treated as zero under cosine.
inline constexpr double kDegenerateNorm = 1e-12;

enum class Metric : std::uint8_t { cosine = 0, euclidean = 1 };

inline std::string_view to_string(Metric m) { return m == Metric::cosine ? "cosine" : "euclidean"; }

inline Metric parse_metric(std::string_view s) {
    if (s == "cosine") return Metric::cosine;
    if (s == "euclidean") return Metric::euclidean;
    throw ConfigError("unknown metric \"" + std::string(s) + "\" (expected cosine or euclidean)");
}

/// Fixed-dimension real vector. Dimension is the length of `values`.
struct EmbeddingVector {
    std::vector<double> values;

    EmbeddingVector() = default;
    explicit EmbeddingVector(std::size_t dim) : values(dim, 0.0) {}
    explicit EmbeddingVector(std::vector<double> v) : values(std::move(v)) {}
    EmbeddingVector(std::initializer_list<double> v) : values(v) {}

    std::size_t dim() const { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
    double& operator[](std::size_t i) { return values[i]; }
    std::span<const double> span() const { return values; }

    bool operator==(const EmbeddingVector&) const = default;
};

/// Per-token vectors aligned with the tokens they came from.
struct TokenEmbeddings {
    std::vector<Token> tokens;
    std::vector<EmbeddingVector> vectors;
    std::size_t dim = 0;

    std::size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }

    bool operator==(const TokenEmbeddings&) const = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

namespace detail {

inline void require_same_dim(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim())
        throw ConfigError("dimension mismatch: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    const double na = norm(a.span());
    const double nb = norm(b.span());
    if (na <= kDegenerateNorm || nb <= kDegenerateNorm) throw NumericError("degenerate vector");
    return dot(a.span(), b.span()) / (na * nb);
}

}  // namespace detail

/// Higher is more similar under both metrics: cos(a,b), or -||a-b|| for euclidean.
inline double similarity(Metric metric, const EmbeddingVector& a, const EmbeddingVector& b) {
    detail::require_same_dim(a, b);
    if (metric == Metric::cosine) return detail::cosine(a, b);
    return -euclidean_distance(a.span(), b.span());
}

/// 1 - cos(a,b) or ||a-b||.
inline double distance(Metric metric, const EmbeddingVector& a, const EmbeddingVector& b) {
    detail::require_same_dim(a, b);
    if (metric == Metric::cosine) return 1.0 - detail::cosine(a, b);
    return euclidean_distance(a.span(), b.span());
}

/// Component-wise arithmetic mean; not re-normalized.
inline EmbeddingVector pool_mean(const TokenEmbeddings& te) {
    if (te.vectors.empty()) throw DataError("empty passage");
    EmbeddingVector out(te.vectors.front().dim());
    for (const auto& v : te.vectors) {
        if (v.dim() != out.dim()) throw DataError("token vectors disagree on dimension");
        for (std::size_t i = 0; i < out.dim(); ++i) out[i] += v[i];
    }
    const double n = static_cast<double>(te.vectors.size());
    for (double& x : out.values) x /= n;
    return out;
}

/// Scales to unit norm; throws NumericError when the norm is degenerate.
inline EmbeddingVector normalized(const EmbeddingVector& v) {
    const double n = norm(v.span());
    if (n <= kDegenerateNorm) throw NumericError("degenerate vector");
    EmbeddingVector out = v;
    for (double& x : out.values) x /= n;
    return out;
}

}  // namespace cer
