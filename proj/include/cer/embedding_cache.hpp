#pragma once

// Persistent cache of token embeddings keyed by a content hash.
//
// File layout (little-endian):
//   "CERC" | version u32 | dim u32
//   record*: byte_length u32 | key u64 | token_count u32
//            | (byte_start u32, byte_end u32) * token_count
//            | f32 * token_count * dim   (row-major)
//
// A damaged header or record is reported as a warning and treated as a miss.

#include <cstdint>
#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cer/binary_io.hpp"
#include "cer/embedder.hpp"
#include "cer/hash.hpp"
#include "cer/log.hpp"

namespace cer {

/// Stable 64-bit key over (provider identity, text bytes). The identity string
/// already encodes provider, dim, and seed or endpoint.
inline std::uint64_t cache_key(std::string_view provider_identity, std::string_view text) {
    std::uint64_t h = fnv1a64(provider_identity);
    h = fnv1a64_u64(provider_identity.size(), h);
    return mix64(fnv1a64(text, h));
}

class EmbeddingCache {
public:
    static constexpr std::uint32_t kVersion = 1;

    /// In-memory only.
    EmbeddingCache() = default;

    /// Backed by `path`; an existing file is loaded eagerly.
    explicit EmbeddingCache(std::string path) : path_(std::move(path)) { load(); }

    EmbeddingCache(const EmbeddingCache&) = delete;
    EmbeddingCache& operator=(const EmbeddingCache&) = delete;

    /// Returns the stored embeddings for `key`, with token texts re-sliced from
    /// `text`. Never throws on a miss.
    std::optional<TokenEmbeddings> get(std::uint64_t key, std::string_view text) const {
        std::shared_lock lock(mutex_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        const Entry& e = it->second;
        TokenEmbeddings te;
        te.dim = dim_;
        for (std::size_t i = 0; i < e.spans.size(); ++i) {
            const auto [start, end] = e.spans[i];
            if (end > text.size() || start >= end) {
                log::warn("embedding cache entry does not match its text; ignoring");
                return std::nullopt;
            }
            te.tokens.push_back({std::string(text.substr(start, end - start)), start, end});
            EmbeddingVector v(dim_);
            for (std::size_t k = 0; k < dim_; ++k) v[k] = e.values[i * dim_ + k];
            te.vectors.push_back(std::move(v));
        }
        return te;
    }

    void put(std::uint64_t key, const TokenEmbeddings& te) {
        std::unique_lock lock(mutex_);
        if (te.dim == 0 && !te.empty()) return;
        if (dim_ != 0 && te.dim != dim_ && !te.empty()) {
            log::warn("embedding cache dim changed from " + std::to_string(dim_) + " to " + std::to_string(te.dim) +
                      "; discarding cache");
            entries_.clear();
            dim_ = 0;
            header_written_ = false;
        }
        if (dim_ == 0) dim_ = te.dim;

        Entry e;
        e.spans.reserve(te.size());
        e.values.reserve(te.size() * dim_);
        for (std::size_t i = 0; i < te.size(); ++i) {
            e.spans.emplace_back(static_cast<std::uint32_t>(te.tokens[i].byte_start),
                                 static_cast<std::uint32_t>(te.tokens[i].byte_end));
            for (double x : te.vectors[i].values) e.values.push_back(static_cast<float>(x));
        }
        if (!path_.empty()) append(key, e);
        entries_.insert_or_assign(key, std::move(e));
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return entries_.size();
    }

    std::size_t dim() const {
        std::shared_lock lock(mutex_);
        return dim_;
    }

private:
    struct Entry {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> spans;
        std::vector<float> values;
    };

    void load() {
        std::vector<std::uint8_t> bytes;
        {
            std::ifstream probe(path_, std::ios::binary);
            if (!probe) return;
        }
        try {
            bytes = bin::read_file(path_);
        } catch (const DataError&) {
            log::warn("cannot read embedding cache " + path_ + "; starting empty");
            return;
        }
        if (bytes.empty()) return;
        bin::Reader r(bytes.data(), bytes.size(), "embedding cache");
        try {
            if (r.raw(4) != "CERC" || r.u32() != kVersion) {
                log::warn("embedding cache " + path_ + " has a bad header; starting empty");
                return;
            }
            dim_ = r.u32();
        } catch (const DataError&) {
            log::warn("embedding cache " + path_ + " is truncated; starting empty");
            dim_ = 0;
            return;
        }
        header_written_ = true;
        while (!r.done()) {
            try {
                const std::uint32_t len = r.u32();
                const std::string rec = r.raw(len);
                bin::Reader rr(reinterpret_cast<const std::uint8_t*>(rec.data()), rec.size(), "cache record");
                const std::uint64_t key = rr.u64();
                const std::uint32_t count = rr.u32();
                Entry e;
                for (std::uint32_t i = 0; i < count; ++i) {
                    const auto s = rr.u32();
                    const auto t = rr.u32();
                    e.spans.emplace_back(s, t);
                }
                e.values.resize(static_cast<std::size_t>(count) * dim_);
                for (float& v : e.values) v = rr.f32();
                if (!rr.done()) throw DataError("record length mismatch");
                entries_.insert_or_assign(key, std::move(e));
            } catch (const DataError&) {
                log::warn("embedding cache " + path_ + " has a damaged record; ignoring the remainder");
                // rewrite on next put so the damaged tail is not appended after
                rewrite_on_put_ = true;
                break;
            }
        }
    }

    static void encode_record(bin::Writer& w, std::uint64_t key, const Entry& e) {
        bin::Writer body;
        body.u64(key);
        body.u32(static_cast<std::uint32_t>(e.spans.size()));
        for (auto [s, t] : e.spans) {
            body.u32(s);
            body.u32(t);
        }
        for (float v : e.values) body.f32(v);
        w.u32(static_cast<std::uint32_t>(body.data().size()));
        w.bytes(body.data());
    }

    void append(std::uint64_t key, const Entry& e) {
        bin::Writer w;
        if (!header_written_ || rewrite_on_put_) {
            // fresh file: header plus every entry currently held
            w.raw("CERC");
            w.u32(kVersion);
            w.u32(static_cast<std::uint32_t>(dim_));
            for (const auto& [k, existing] : entries_)
                if (k != key) encode_record(w, k, existing);
            encode_record(w, key, e);
            bin::write_file_atomic(path_, w.data());
            header_written_ = true;
            rewrite_on_put_ = false;
            return;
        }
        encode_record(w, key, e);
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        if (!out) {
            log::warn("cannot append to embedding cache " + path_);
            return;
        }
        out.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
    }

    std::string path_;
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::uint64_t, Entry> entries_;
    std::size_t dim_ = 0;
    bool header_written_ = false;
    bool rewrite_on_put_ = false;
};

/// Embedder decorator that consults an EmbeddingCache before the wrapped provider.
class CachedEmbedder final : public Embedder {
public:
    CachedEmbedder(Embedder& inner, EmbeddingCache& cache) : inner_(inner), cache_(cache) {}

    TokenEmbeddings embed_tokens(std::string_view text) override {
        const auto key = cache_key(inner_.identity(), text);
        if (auto hit = cache_.get(key, text)) return std::move(*hit);
        TokenEmbeddings te = inner_.embed_tokens(text);
        cache_.put(key, te);
        return te;
    }

    std::vector<TokenEmbeddings> embed_batch(std::span<const std::string> texts) override {
        std::vector<std::optional<TokenEmbeddings>> slots(texts.size());
        std::vector<std::string> misses;
        std::vector<std::size_t> miss_idx;
        const std::string id = inner_.identity();
        for (std::size_t i = 0; i < texts.size(); ++i) {
            slots[i] = cache_.get(cache_key(id, texts[i]), texts[i]);
            if (!slots[i]) {
                misses.push_back(texts[i]);
                miss_idx.push_back(i);
            }
        }
        if (!misses.empty()) {
            auto fresh = inner_.embed_batch(misses);
            for (std::size_t k = 0; k < fresh.size(); ++k) {
                cache_.put(cache_key(id, misses[k]), fresh[k]);
                slots[miss_idx[k]] = std::move(fresh[k]);
            }
        }
        std::vector<TokenEmbeddings> out;
        out.reserve(slots.size());
        for (auto& s : slots) out.push_back(std::move(*s));
        return out;
    }

    std::size_t dim() const override { return inner_.dim(); }
    std::string identity() const override { return inner_.identity(); }

private:
    Embedder& inner_;
    EmbeddingCache& cache_;
};

}  // namespace cer
