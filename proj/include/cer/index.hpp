#pragma once

// Exact brute-force vector index over projected chunk embeddings.
//
// File layout (little-endian):
//   "CERI" | version u32 | metric u8 | dim u32 | count u64 | head_fingerprint u64
//   | crc32 u32 | payload
//   crc32 covers the header bytes before it followed by the payload
//   payload = (chunk_id: u32 length + UTF-8 bytes, vector: f32 * dim) * count

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include <zlib.h>

#include "cer/binary_io.hpp"
#include "cer/corpus.hpp"
#include "cer/embedder.hpp"
#include "cer/embedding.hpp"
#include "cer/error.hpp"
#include "cer/projection.hpp"

namespace cer {

struct IndexEntry {
    std::string chunk_id;
    EmbeddingVector vector;  // single-precision values; unit norm under cosine

    bool operator==(const IndexEntry&) const = default;
};

struct VectorIndex {
    std::size_t dim = 0;
    Metric metric = Metric::cosine;
    std::vector<IndexEntry> entries;
    std::uint64_t head_fingerprint = 0;

    std::size_t size() const { return entries.size(); }
    bool operator==(const VectorIndex&) const = default;
};

struct RetrievalHit {
    std::string chunk_id;
    double score = 0.0;  // higher is better
    int rank = 0;        // 1-based

    bool operator==(const RetrievalHit&) const = default;
};

/// Projected passage embedding as stored in / queried against an index.
inline EmbeddingVector index_vector(Embedder& embedder, const ProjectionHead& head, Metric metric,
                                    std::string_view text) {
    EmbeddingVector v = project(head, embed_passage(embedder, text));
    if (metric == Metric::cosine) v = normalized(v);
    return v;
}

inline VectorIndex build_index(const std::vector<Chunk>& chunks, Embedder& embedder, const ProjectionHead& head,
                               Metric metric) {
    if (chunks.empty()) throw DataError("cannot build an index from zero chunks");
    validate(head);
    if (embedder.dim() != 0 && embedder.dim() != head.d_in)
        throw ConfigError("head expects dim " + std::to_string(head.d_in) + " but the embedder produces " +
                          std::to_string(embedder.dim()));
    VectorIndex index;
    index.dim = head.d_out;
    index.metric = metric;
    index.head_fingerprint = head_fingerprint(head);
    std::unordered_set<std::string> seen;
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const Chunk& c : chunks) texts.push_back(c.text);
    const auto embedded = embedder.embed_batch(texts);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (!seen.insert(chunks[i].chunk_id).second) throw DataError("duplicate chunk_id " + chunks[i].chunk_id);
        IndexEntry e{chunks[i].chunk_id, {}};
        try {
            e.vector = project(head, pool_mean(embedded[i]));
            if (metric == Metric::cosine) e.vector = normalized(e.vector);
        } catch (const Error& err) {
            throw NumericError("chunk " + chunks[i].chunk_id + ": " + err.what());
        }
        round_to_float(e.vector);
        index.entries.push_back(std::move(e));
    }
    return index;
}

/// Score of a stored vector against a query already in index space.
inline double index_score(Metric metric, const EmbeddingVector& query, const EmbeddingVector& stored) {
    if (metric == Metric::cosine) return dot(query.span(), stored.span());
    return -euclidean_distance(query.span(), stored.span());
}

/// Top-K by score descending, ties by ascending chunk_id. `query` must already
/// be projected (and unit-normalized under cosine).
inline std::vector<RetrievalHit> search_vector(const VectorIndex& index, const EmbeddingVector& query, int k) {
    if (k < 0) throw ConfigError("K must be >= 0");
    if (query.dim() != index.dim)
        throw ConfigError("query dim " + std::to_string(query.dim()) + " does not match index dim " +
                          std::to_string(index.dim));
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(k), index.size());
    if (n == 0) return {};
    std::vector<double> scores(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) scores[i] = index_score(index.metric, query, index.entries[i].vector);
    std::vector<std::size_t> order(index.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return index.entries[a].chunk_id < index.entries[b].chunk_id;
                      });
    std::vector<RetrievalHit> hits;
    hits.reserve(n);
    for (std::size_t r = 0; r < n; ++r)
        hits.push_back({index.entries[order[r]].chunk_id, scores[order[r]], static_cast<int>(r + 1)});
    return hits;
}

inline std::vector<RetrievalHit> search_topk(const VectorIndex& index, std::string_view query_text, Embedder& embedder,
                                             const ProjectionHead& head, int k) {
    if (head_fingerprint(head) != index.head_fingerprint) throw ConfigError("index built with different head");
    if (k == 0) return {};
    auto te = embedder.embed_tokens(query_text);
    if (te.empty()) throw DataError("query has no tokens");
    EmbeddingVector q = project(head, pool_mean(te));
    if (index.metric == Metric::cosine) q = normalized(q);
    return search_vector(index, q, k);
}

inline constexpr std::uint32_t kIndexVersion = 1;

inline std::vector<std::uint8_t> encode_index(const VectorIndex& index) {
    bin::Writer payload;
    for (const IndexEntry& e : index.entries) {
        if (e.vector.dim() != index.dim) throw ConfigError("index entry " + e.chunk_id + " has the wrong dim");
        payload.str(e.chunk_id);
        for (double x : e.vector.values) payload.f32(static_cast<float>(x));
    }
    const auto& body = payload.data();
    bin::Writer w;
    w.raw("CERI");
    w.u32(kIndexVersion);
    w.u8(static_cast<std::uint8_t>(index.metric));
    w.u32(static_cast<std::uint32_t>(index.dim));
    w.u64(index.entries.size());
    w.u64(index.head_fingerprint);
    const auto& head = w.data();
    uLong crc = crc32(0L, head.data(), static_cast<uInt>(head.size()));
    crc = crc32(crc, body.data(), static_cast<uInt>(body.size()));
    w.u32(static_cast<std::uint32_t>(crc));
    w.bytes(body);
    return w.take();
}

inline VectorIndex decode_index(const std::vector<std::uint8_t>& bytes) {
    bin::Reader r(bytes.data(), bytes.size(), "index file");
    if (r.raw(4) != "CERI") throw DataError("not an index file (bad magic)");
    const auto version = r.u32();
    if (version != kIndexVersion) throw DataError("unsupported index version " + std::to_string(version));
    VectorIndex index;
    const auto metric = r.u8();
    if (metric > 1) throw DataError("index file has an invalid metric byte");
    index.metric = static_cast<Metric>(metric);
    index.dim = r.u32();
    const std::uint64_t count = r.u64();
    index.head_fingerprint = r.u64();
    const std::size_t head_len = r.pos();
    const std::uint32_t crc = r.u32();
    const std::uint8_t* body = bytes.data() + r.pos();
    const std::size_t body_len = r.remaining();
    uLong actual = crc32(0L, bytes.data(), static_cast<uInt>(head_len));
    actual = crc32(actual, body, static_cast<uInt>(body_len));
    if (static_cast<std::uint32_t>(actual) != crc)
        throw DataError("index file checksum mismatch (corrupt or truncated)");
    if (index.dim == 0) throw DataError("index file has dim 0");
    bin::Reader p(body, body_len, "index payload");
    for (std::uint64_t i = 0; i < count; ++i) {
        IndexEntry e;
        e.chunk_id = p.str();
        e.vector = EmbeddingVector(index.dim);
        for (double& x : e.vector.values) {
            x = p.f32();
            if (!std::isfinite(x)) throw DataError("index entry " + e.chunk_id + " has a non-finite value");
        }
        index.entries.push_back(std::move(e));
    }
    if (!p.done()) throw DataError("index file has trailing bytes");
    return index;
}

inline void save_index(const VectorIndex& index, const std::string& path) {
    bin::write_file_atomic(path, encode_index(index));
}

inline VectorIndex load_index(const std::string& path) { return decode_index(bin::read_file(path)); }

}  // namespace cer
