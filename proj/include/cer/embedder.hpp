#pragma once

// Token embedding providers. The builtin provider is a deterministic signed
// feature-hashing embedder; the remote provider (remote_embedder.hpp) speaks
// the HTTP wire protocol to an external encoder.

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cer/corpus.hpp"
#include "cer/embedding.hpp"
#include "cer/error.hpp"
#include "cer/hash.hpp"
#include "cer/unicode.hpp"

namespace cer {

enum class Provider { builtin_hash, remote };

inline std::string_view to_string(Provider p) { return p == Provider::builtin_hash ? "builtin_hash" : "remote"; }

inline Provider parse_provider(std::string_view s) {
    if (s == "builtin_hash") return Provider::builtin_hash;
    if (s == "remote") return Provider::remote;
    throw ConfigError("unknown embedder provider \"" + std::string(s) + "\"");
}

struct EmbedderConfig {
    Provider provider = Provider::builtin_hash;
    int dim = 256;            // builtin only
    std::uint64_t seed = 0;   // builtin only
    std::string endpoint;     // remote only
    int batch_size = 16;      // remote only
    int timeout_ms = 30000;   // remote only
};

inline void validate(const EmbedderConfig& cfg) {
    if (cfg.provider == Provider::builtin_hash && cfg.dim < 2) throw ConfigError("embedder: dim must be >= 2");
    if (cfg.batch_size < 1) throw ConfigError("embedder: batch_size must be >= 1");
    if (cfg.timeout_ms < 1) throw ConfigError("embedder: timeout_ms must be >= 1");
    if (cfg.provider == Provider::remote && cfg.endpoint.empty()) throw ConfigError("embedder: remote provider needs an endpoint");
}

/// Rounds every component to the nearest float. Provider outputs are single
/// precision so that the binary cache reproduces them exactly.
inline void round_to_float(EmbeddingVector& v) {
    for (double& x : v.values) x = static_cast<double>(static_cast<float>(x));
}

class Embedder {
public:
    virtual ~Embedder() = default;

    /// Empty text (or text without tokens) yields an empty TokenEmbeddings.
    virtual TokenEmbeddings embed_tokens(std::string_view text) = 0;

    virtual std::vector<TokenEmbeddings> embed_batch(std::span<const std::string> texts) {
        std::vector<TokenEmbeddings> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed_tokens(t));
        return out;
    }

    /// Output dimension; 0 while unknown (remote provider before first response).
    virtual std::size_t dim() const = 0;

    /// Stable description of everything that determines the output, used in cache keys.
    virtual std::string identity() const = 0;
};

/// Mean-pooled passage embedding.
inline EmbeddingVector embed_passage(Embedder& embedder, std::string_view text) {
    return pool_mean(embedder.embed_tokens(text));
}

namespace detail {

inline std::uint64_t feature_hash(std::string_view feature, std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t h = fnv1a64_u64(salt, kFnvOffset);
    h = fnv1a64_u64(seed, h);
    return mix64(fnv1a64(feature, h));
}

inline constexpr std::uint64_t kIndexSalt = 0x494e444558ULL;  // "INDEX"
inline constexpr std::uint64_t kSignSalt = 0x5349474eULL;     // "SIGN"

/// Features of one token: the whole case-folded token plus the character
/// 3-, 4-, and 5-grams of "<token>" (in code points).
inline std::vector<std::string> token_features(std::string_view token_text) {
    const std::string folded = unicode::fold_case(token_text);
    std::vector<std::string> feats;
    feats.push_back("T:" + folded);

    std::vector<std::string> cps;  // padded code points, each as UTF-8
    cps.emplace_back("<");
    for (std::size_t pos = 0; pos < folded.size();) {
        const auto d = unicode::decode(folded, pos);
        cps.emplace_back(folded.substr(pos, d.length));
        pos += d.length;
    }
    cps.emplace_back(">");
    for (std::size_t n = 3; n <= 5; ++n) {
        if (cps.size() < n) break;
        for (std::size_t i = 0; i + n <= cps.size(); ++i) {
            std::string g = "G:";
            for (std::size_t k = 0; k < n; ++k) g += cps[i + k];
            feats.push_back(std::move(g));
        }
    }
    return feats;
}

}  // namespace detail

class BuiltinHashEmbedder final : public Embedder {
public:
    explicit BuiltinHashEmbedder(std::size_t dim = 256, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {
        if (dim < 2) throw ConfigError("embedder: dim must be >= 2");
    }

    /// Unit-norm signed-count vector of the token's hashed features.
    EmbeddingVector embed_token(std::string_view token_text) const {
        EmbeddingVector v(dim_);
        const auto feats = detail::token_features(token_text);
        for (const auto& f : feats) {
            const auto idx = detail::feature_hash(f, seed_, detail::kIndexSalt) % dim_;
            const bool negative = (detail::feature_hash(f, seed_, detail::kSignSalt) >> 63) != 0;
            v[idx] += negative ? -1.0 : 1.0;
        }
        double n = norm(v.span());
        if (n == 0.0) {
            // every feature cancelled; fall back to the whole-token coordinate
            v[detail::feature_hash(feats.front(), seed_, detail::kIndexSalt) % dim_] = 1.0;
            n = 1.0;
        }
        for (double& x : v.values) x /= n;
        round_to_float(v);
        return v;
    }

    TokenEmbeddings embed_tokens(std::string_view text) override {
        TokenEmbeddings te;
        te.dim = dim_;
        te.tokens = tokenize(text);
        te.vectors.reserve(te.tokens.size());
        for (const auto& t : te.tokens) te.vectors.push_back(embed_token(t.text));
        return te;
    }

    std::size_t dim() const override { return dim_; }

    std::string identity() const override {
        return "builtin_hash/dim=" + std::to_string(dim_) + "/seed=" + std::to_string(seed_);
    }

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

}  // namespace cer
