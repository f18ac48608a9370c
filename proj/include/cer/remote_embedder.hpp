#pragma once

// HTTP client for the remote token-embedding protocol:
//
//   POST {endpoint}/embed_tokens   {"texts": [str, ...]}
//   200 -> {"model": str, "dim": int,
//           "tokens": [[str, ...], ...],
//           "token_embeddings": [[[float, ...], ...], ...]}
//
// Requests are batched at batch_size and issued sequentially in input order.

#include <atomic>
#include <cctype>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "cer/embedder.hpp"
#include "cer/error.hpp"

namespace cer {

namespace detail {

struct ParsedEndpoint {
    std::string scheme_host_port;
    std::string path_prefix;  // no trailing slash
};

inline ParsedEndpoint parse_endpoint(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw ConfigError("embedder endpoint must be an http:// URL: " + std::string(url));
    const auto path_start = url.find('/', scheme_end + 3);
    ParsedEndpoint ep;
    ep.scheme_host_port = std::string(url.substr(0, path_start));
    if (path_start != std::string_view::npos) ep.path_prefix = std::string(url.substr(path_start));
    while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
    return ep;
}

inline bool ascii_iequal(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i]))) return false;
    return true;
}

inline std::size_t find_ci(std::string_view hay, std::string_view needle, std::size_t from) {
    if (needle.empty() || needle.size() > hay.size()) return std::string_view::npos;
    for (std::size_t p = from; p + needle.size() <= hay.size(); ++p)
        if (ascii_iequal(hay.substr(p, needle.size()), needle)) return p;
    return std::string_view::npos;
}

/// Strips common subword markers ("##", U+2581, U+0120).
inline std::string_view strip_subword_marker(std::string_view tok) {
    for (std::string_view marker : {std::string_view("##"), std::string_view("\xE2\x96\x81"), std::string_view("\xC4\xA0")})
        if (tok.size() > marker.size() && tok.substr(0, marker.size()) == marker) return tok.substr(marker.size());
    return tok;
}

/// Maps encoder tokens onto byte spans of `text`, left to right. Tokens that
/// cannot be located (special tokens such as [CLS]) are dropped together with
/// their vectors.
inline TokenEmbeddings align_tokens(std::string_view text, const std::vector<std::string>& tokens,
                                    std::vector<EmbeddingVector> vectors, std::size_t dim) {
    TokenEmbeddings te;
    te.dim = dim;
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string_view needle = strip_subword_marker(tokens[i]);
        std::size_t at = text.find(needle, cursor);
        if (needle.empty()) at = std::string_view::npos;
        if (at == std::string_view::npos) at = find_ci(text, needle, cursor);
        if (at == std::string_view::npos) continue;
        te.tokens.push_back({std::string(text.substr(at, needle.size())), at, at + needle.size()});
        te.vectors.push_back(std::move(vectors[i]));
        cursor = at + needle.size();
    }
    return te;
}

}  // namespace detail

class RemoteEmbedder final : public Embedder {
public:
    explicit RemoteEmbedder(const EmbedderConfig& cfg) : cfg_(cfg), endpoint_(detail::parse_endpoint(cfg.endpoint)) {
        validate(cfg_);
    }

    /// Pins the expected dimension up front (e.g. from an existing index).
    void pin_dim(std::size_t dim) {
        std::size_t expected = 0;
        if (!dim_.compare_exchange_strong(expected, dim) && expected != dim)
            throw ProviderError("remote dim mismatch: pinned " + std::to_string(expected) + ", requested " + std::to_string(dim));
    }

    TokenEmbeddings embed_tokens(std::string_view text) override {
        if (text.empty()) return TokenEmbeddings{{}, {}, dim()};
        std::vector<std::string> one{std::string(text)};
        return std::move(embed_batch(one).front());
    }

    std::vector<TokenEmbeddings> embed_batch(std::span<const std::string> texts) override {
        std::vector<TokenEmbeddings> out;
        out.reserve(texts.size());
        const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
        for (std::size_t begin = 0; begin < texts.size(); begin += bs) {
            const auto batch = texts.subspan(begin, std::min(bs, texts.size() - begin));
            auto part = request(batch);
            for (auto& te : part) out.push_back(std::move(te));
        }
        return out;
    }

    std::size_t dim() const override { return dim_.load(); }

    std::string identity() const override { return "remote/" + cfg_.endpoint; }

private:
    std::vector<TokenEmbeddings> request(std::span<const std::string> texts) {
        httplib::Client client(endpoint_.scheme_host_port);
        const auto sec = cfg_.timeout_ms / 1000;
        const auto usec = (cfg_.timeout_ms % 1000) * 1000;
        client.set_connection_timeout(sec, usec);
        client.set_read_timeout(sec, usec);
        client.set_write_timeout(sec, usec);

        nlohmann::json body = {{"texts", nlohmann::json::array()}};
        for (const auto& t : texts) body["texts"].push_back(t);
        auto res = client.Post(endpoint_.path_prefix + "/embed_tokens", body.dump(), "application/json");
        if (!res) {
            const bool timeout = res.error() == httplib::Error::Read || res.error() == httplib::Error::Write ||
                                 res.error() == httplib::Error::ConnectionTimeout;
            throw ProviderError(std::string(timeout ? "remote timeout: " : "remote request failed: ") +
                                httplib::to_string(res.error()) + " (" + cfg_.endpoint + ")");
        }
        if (res->status != 200) throw ProviderError("remote returned HTTP " + std::to_string(res->status));
        try {
            return parse_response(nlohmann::json::parse(res->body), texts);
        } catch (const nlohmann::json::exception& e) {
            throw ProviderError(std::string("malformed remote response: ") + e.what());
        }
    }

    std::vector<TokenEmbeddings> parse_response(const nlohmann::json& j, std::span<const std::string> texts) {
        if (!j.is_object() || !j.contains("dim") || !j.contains("tokens") || !j.contains("token_embeddings"))
            throw ProviderError("malformed remote response: missing fields");
        const auto reported = j.at("dim").get<std::int64_t>();
        if (reported < 1) throw ProviderError("malformed remote response: bad dim");
        const auto d = static_cast<std::size_t>(reported);
        std::size_t expected = 0;
        if (!dim_.compare_exchange_strong(expected, d) && expected != d)
            throw ProviderError("remote dim mismatch: expected " + std::to_string(expected) + ", got " + std::to_string(d));

        const auto& toks = j.at("tokens");
        const auto& embs = j.at("token_embeddings");
        if (!toks.is_array() || !embs.is_array() || toks.size() != texts.size() || embs.size() != texts.size())
            throw ProviderError("malformed remote response: outer lists not aligned with request");

        std::vector<TokenEmbeddings> out;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            const auto names = toks[i].get<std::vector<std::string>>();
            const auto& rows = embs[i];
            if (!rows.is_array() || rows.size() != names.size())
                throw ProviderError("malformed remote response: tokens and vectors not aligned for text " + std::to_string(i));
            std::vector<EmbeddingVector> vecs;
            vecs.reserve(rows.size());
            for (const auto& row : rows) {
                EmbeddingVector v(row.get<std::vector<double>>());
                if (v.dim() != d) throw ProviderError("malformed remote response: vector length != dim");
                for (double x : v.values)
                    if (!std::isfinite(x)) throw ProviderError("malformed remote response: non-finite value");
                round_to_float(v);
                vecs.push_back(std::move(v));
            }
            out.push_back(detail::align_tokens(texts[i], names, std::move(vecs), d));
        }
        return out;
    }

    EmbedderConfig cfg_;
    detail::ParsedEndpoint endpoint_;
    std::atomic<std::size_t> dim_{0};
};

}  // namespace cer
