#pragma once

// Trainable linear projection applied on top of frozen base embeddings, and
// its binary checkpoint:
//
//   "CERW" | version u32 | d_in u32 | d_out u32 | metric u8 | trained_steps u64
//   | W row-major f32 (d_out * d_in) | crc32 of everything before it, u32

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <zlib.h>

#include "cer/binary_io.hpp"
#include "cer/embedding.hpp"
#include "cer/error.hpp"
#include "cer/hash.hpp"
#include "cer/rng.hpp"

namespace cer {

struct ProjectionHead {
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    std::vector<double> W;  // d_out x d_in, row-major
    Metric metric = Metric::cosine;
    std::uint64_t trained_steps = 0;

    double& at(std::size_t row, std::size_t col) { return W[row * d_in + col]; }
    double at(std::size_t row, std::size_t col) const { return W[row * d_in + col]; }

    bool operator==(const ProjectionHead&) const = default;
};

inline void validate(const ProjectionHead& head) {
    if (head.d_in < 2 || head.d_out < 2) throw ConfigError("projection head dims must be >= 2");
    if (head.W.size() != head.d_in * head.d_out) throw ConfigError("projection head matrix has the wrong size");
    for (double w : head.W)
        if (!std::isfinite(w)) throw NumericError("projection head contains a non-finite entry");
}

/// Identity when d_in == d_out; otherwise N(0, 1/d_in) entries drawn from `seed`
/// and rounded to single precision.
inline ProjectionHead init_head(std::size_t d_in, std::size_t d_out, Metric metric, std::uint64_t seed = 0) {
    ProjectionHead h{d_in, d_out, std::vector<double>(d_in * d_out, 0.0), metric, 0};
    if (d_in == d_out) {
        for (std::size_t i = 0; i < d_in; ++i) h.at(i, i) = 1.0;
    } else {
        Rng rng(seed);
        const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
        for (double& w : h.W) w = static_cast<double>(static_cast<float>(rng.normal() * scale));
    }
    validate(h);
    return h;
}

inline ProjectionHead identity_head(std::size_t dim, Metric metric) { return init_head(dim, dim, metric); }

/// W * v.
inline EmbeddingVector project(const ProjectionHead& head, const EmbeddingVector& v) {
    if (v.dim() != head.d_in)
        throw ConfigError("projection expects dim " + std::to_string(head.d_in) + ", got " + std::to_string(v.dim()));
    EmbeddingVector out(head.d_out);
    for (std::size_t r = 0; r < head.d_out; ++r) {
        const double* row = head.W.data() + r * head.d_in;
        double s = 0.0;
        for (std::size_t c = 0; c < head.d_in; ++c) s += row[c] * v[c];
        out[r] = s;
    }
    return out;
}

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> encode_checkpoint(const ProjectionHead& head) {
    validate(head);
    bin::Writer w;
    w.raw("CERW");
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(head.d_in));
    w.u32(static_cast<std::uint32_t>(head.d_out));
    w.u8(static_cast<std::uint8_t>(head.metric));
    w.u64(head.trained_steps);
    for (double x : head.W) w.f32(static_cast<float>(x));
    auto bytes = w.take();
    const auto crc = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
    bin::Writer trailer;
    trailer.u32(crc);
    const auto t = trailer.take();
    bytes.insert(bytes.end(), t.begin(), t.end());
    return bytes;
}

inline ProjectionHead decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    bin::Reader r(bytes.data(), bytes.size(), "head checkpoint");
    if (r.raw(4) != "CERW") throw DataError("not a head checkpoint (bad magic)");
    const auto version = r.u32();
    if (version != kCheckpointVersion) throw DataError("unsupported head checkpoint version " + std::to_string(version));
    ProjectionHead h;
    h.d_in = r.u32();
    h.d_out = r.u32();
    const auto metric = r.u8();
    if (metric > 1) throw DataError("head checkpoint has an invalid metric byte");
    h.metric = static_cast<Metric>(metric);
    h.trained_steps = r.u64();
    if (h.d_in < 2 || h.d_out < 2) throw DataError("head checkpoint has invalid dimensions");
    const std::size_t n = h.d_in * h.d_out;
    if (r.remaining() != n * 4 + 4) throw DataError("truncated head checkpoint (size does not match dimensions)");
    const std::size_t body_len = bytes.size() - 4;
    bin::Reader tail(bytes.data() + body_len, 4, "head checkpoint");
    if (static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body_len))) != tail.u32())
        throw DataError("head checkpoint is corrupt (checksum mismatch)");
    h.W.resize(n);
    for (double& x : h.W) {
        x = r.f32();
        if (!std::isfinite(x)) throw DataError("head checkpoint contains a non-finite weight");
    }
    return h;
}

inline void save_head(const ProjectionHead& head, const std::string& path) {
    bin::write_file_atomic(path, encode_checkpoint(head));
}

inline ProjectionHead load_head(const std::string& path) { return decode_checkpoint(bin::read_file(path)); }

/// Hash of the checkpoint encoding; identifies the head an index was built with.
inline std::uint64_t head_fingerprint(const ProjectionHead& head) {
    return fnv1a64(std::span<const std::uint8_t>(encode_checkpoint(head)));
}

/// Rounds every weight to single precision so the checkpoint round-trips exactly.
inline void round_weights(ProjectionHead& head) {
    for (double& w : head.W) w = static_cast<double>(static_cast<float>(w));
}

}  // namespace cer
