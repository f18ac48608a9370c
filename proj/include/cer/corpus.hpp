#pragma once

// Documents, chunks, and the byte-exact tokenizer.

#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "cer/error.hpp"
#include "cer/unicode.hpp"

namespace cer {

enum class Relevance { positive, negative, unlabeled };

inline std::string_view to_string(Relevance r) {
    switch (r) {
        case Relevance::positive: return "positive";
        case Relevance::negative: return "negative";
        case Relevance::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

inline std::optional<Relevance> parse_relevance(std::string_view s) {
    if (s == "positive") return Relevance::positive;
    if (s == "negative") return Relevance::negative;
    if (s == "unlabeled") return Relevance::unlabeled;
    return std::nullopt;
}

/// claim_id -> label. Ordered so serialization is stable.
using LabelMap = std::map<std::string, Relevance>;

struct Token {
    std::string text;
    std::size_t byte_start = 0;
    std::size_t byte_end = 0;

    bool operator==(const Token&) const = default;
};

struct Document {
    std::string doc_id;
    std::string text;
    LabelMap labels;
};

struct Chunk {
    std::string chunk_id;  // "<doc_id>#<k>"
    std::string doc_id;
    std::string text;
    std::vector<Token> tokens;  // byte offsets into `text`
    LabelMap labels;            // inherited from the document

    bool is_positive_for(const std::string& claim_id) const {
        auto it = labels.find(claim_id);
        return it != labels.end() && it->second == Relevance::positive;
    }

    bool operator==(const Chunk&) const = default;
};

struct ChunkConfig {
    int max_tokens = 128;
    int overlap_tokens = 32;
};

/// A claim (query) to retrieve evidence for.
struct Claim {
    std::string claim_id;
    std::string text;
};

/// Maximal runs of Unicode alphanumeric code points; everything else separates.
inline std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    std::size_t pos = 0;
    constexpr std::size_t none = std::string_view::npos;
    std::size_t start = none;
    while (pos < text.size()) {
        const unicode::Decoded d = unicode::decode(text, pos);
        const bool alnum = unicode::is_alnum(d.cp);
        if (alnum && start == none) start = pos;
        if (!alnum && start != none) {
            tokens.push_back({std::string(text.substr(start, pos - start)), start, pos});
            start = none;
        }
        pos += d.length;
    }
    if (start != none) tokens.push_back({std::string(text.substr(start)), start, text.size()});
    return tokens;
}

inline void validate(const ChunkConfig& cfg) {
    if (cfg.max_tokens < 1) throw ConfigError("chunking: max_tokens must be >= 1");
    if (cfg.overlap_tokens < 0 || cfg.overlap_tokens >= cfg.max_tokens)
        throw ConfigError("chunking: overlap_tokens must satisfy 0 <= overlap < max_tokens");
}

/// Sliding token window with stride max_tokens - overlap_tokens; a window starts
/// at every stride offset below the token count, so trailing partial windows are
/// kept. Chunk text spans from the first token's start to the last token's end.
inline std::vector<Chunk> chunk_document(const Document& doc, const ChunkConfig& cfg) {
    validate(cfg);
    const std::vector<Token> all = tokenize(doc.text);
    std::vector<Chunk> chunks;
    const std::size_t window = static_cast<std::size_t>(cfg.max_tokens);
    const std::size_t stride = window - static_cast<std::size_t>(cfg.overlap_tokens);
    for (std::size_t begin = 0; begin < all.size(); begin += stride) {
        const std::size_t end = std::min(begin + window, all.size());
        Chunk c;
        c.chunk_id = doc.doc_id + "#" + std::to_string(chunks.size());
        c.doc_id = doc.doc_id;
        const std::size_t base = all[begin].byte_start;
        c.text = doc.text.substr(base, all[end - 1].byte_end - base);
        c.tokens.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i)
            c.tokens.push_back({all[i].text, all[i].byte_start - base, all[i].byte_end - base});
        c.labels = doc.labels;
        chunks.push_back(std::move(c));
    }
    return chunks;
}

inline std::vector<Chunk> chunk_corpus(const std::vector<Document>& docs, const ChunkConfig& cfg) {
    std::vector<Chunk> out;
    for (const Document& d : docs) {
        auto cs = chunk_document(d, cfg);
        out.insert(out.end(), std::make_move_iterator(cs.begin()), std::make_move_iterator(cs.end()));
    }
    return out;
}

namespace detail {

inline bool is_blank(std::string_view line) {
    return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

inline LabelMap parse_labels(const nlohmann::json& j, std::size_t line_no) {
    LabelMap labels;
    if (!j.is_object()) throw DataError("line " + std::to_string(line_no) + ": \"labels\" must be an object");
    for (const auto& [claim, value] : j.items()) {
        auto rel = value.is_string() ? parse_relevance(value.get<std::string>()) : std::nullopt;
        if (!rel) throw DataError("line " + std::to_string(line_no) + ": bad label for claim " + claim);
        labels.emplace(claim, *rel);
    }
    return labels;
}

inline nlohmann::json labels_to_json(const LabelMap& labels) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [claim, rel] : labels) j[claim] = std::string(to_string(rel));
    return j;
}

/// Calls fn(json, line_no) for every non-blank line of a JSON-lines file.
template <class Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        if (!j.is_object()) throw DataError(path + ": line " + std::to_string(line_no) + ": expected an object");
        try {
            fn(j, line_no);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

inline std::string require_string(const nlohmann::json& j, const char* key, std::size_t line_no) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string())
        throw DataError("line " + std::to_string(line_no) + ": missing string field \"" + key + "\"");
    return it->get<std::string>();
}

}  // namespace detail

/// Reads a JSON-lines corpus: {"doc_id", "text", "labels"?} per line.
inline std::vector<Document> load_corpus(const std::string& path) {
    std::vector<Document> docs;
    std::unordered_set<std::string> seen;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
        Document d;
        try {
            d.doc_id = detail::require_string(j, "doc_id", line_no);
            d.text = detail::require_string(j, "text", line_no);
            if (auto it = j.find("labels"); it != j.end() && !it->is_null()) d.labels = detail::parse_labels(*it, line_no);
        } catch (const DataError& e) {
            throw DataError(path + ": " + e.what());
        }
        const std::string where = path + ": line " + std::to_string(line_no) + ": ";
        if (d.doc_id.empty()) throw DataError(where + "empty doc_id");
        if (d.text.empty()) throw DataError(where + "empty text");
        if (!seen.insert(d.doc_id).second) throw DataError(where + "duplicate doc_id \"" + d.doc_id + "\"");
        docs.push_back(std::move(d));
    });
    return docs;
}

/// Reads claims: {"claim_id", "text"} per line.
inline std::vector<Claim> load_claims(const std::string& path) {
    std::vector<Claim> claims;
    std::unordered_set<std::string> seen;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
        Claim c;
        try {
            c.claim_id = detail::require_string(j, "claim_id", line_no);
            c.text = detail::require_string(j, "text", line_no);
        } catch (const DataError& e) {
            throw DataError(path + ": " + e.what());
        }
        if (!seen.insert(c.claim_id).second)
            throw DataError(path + ": line " + std::to_string(line_no) + ": duplicate claim_id \"" + c.claim_id + "\"");
        claims.push_back(std::move(c));
    });
    return claims;
}

/// Chunk table: one {"chunk_id","doc_id","text","labels"} object per line.
/// Tokens are not stored; they are recomputed from the text on load.
inline void save_chunks(const std::vector<Chunk>& chunks, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    for (const Chunk& c : chunks) {
        nlohmann::json j = {{"chunk_id", c.chunk_id},
                            {"doc_id", c.doc_id},
                            {"text", c.text},
                            {"labels", detail::labels_to_json(c.labels)}};
        out << j.dump() << '\n';
    }
    if (!out) throw DataError("write failed for " + path);
}

inline std::vector<Chunk> load_chunks(const std::string& path) {
    std::vector<Chunk> chunks;
    std::unordered_set<std::string> seen;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
        Chunk c;
        c.chunk_id = detail::require_string(j, "chunk_id", line_no);
        c.doc_id = detail::require_string(j, "doc_id", line_no);
        c.text = detail::require_string(j, "text", line_no);
        if (auto it = j.find("labels"); it != j.end()) c.labels = detail::parse_labels(*it, line_no);
        c.tokens = tokenize(c.text);
        if (c.tokens.empty()) throw DataError(path + ": line " + std::to_string(line_no) + ": chunk has no tokens");
        if (!seen.insert(c.chunk_id).second)
            throw DataError(path + ": line " + std::to_string(line_no) + ": duplicate chunk_id \"" + c.chunk_id + "\"");
        chunks.push_back(std::move(c));
    });
    return chunks;
}

}  // namespace cer
