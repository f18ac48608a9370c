#pragma once

// Pipeline configuration and the stage commands behind the `cer` CLI.
// Every command is a pure function of (config, input artifacts).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <json.hpp>

#include "cer/corpus.hpp"
#include "cer/embedder.hpp"
#include "cer/embedding_cache.hpp"
#include "cer/error.hpp"
#include "cer/eval.hpp"
#include "cer/explain.hpp"
#include "cer/hash.hpp"
#include "cer/index.hpp"
#include "cer/mining.hpp"
#include "cer/projection.hpp"
#include "cer/remote_embedder.hpp"
#include "cer/subjectivity.hpp"
#include "cer/trainer.hpp"

namespace cer {

namespace fs = std::filesystem;

struct PipelinePaths {
    std::string corpus = "corpus.jsonl";
    std::string claims = "claims.jsonl";
    std::string chunks = "work/chunks.jsonl";
    std::string triplets = "work/triplets.jsonl";
    std::string head = "work/head.cerw";
    std::string index = "work/index.ceri";
    std::string reports = "work/reports";
    std::string cache = "";  // empty disables the embedding cache
};

struct PipelineConfig {
    EmbedderConfig embedder;
    ChunkConfig chunking;
    MiningConfig mining;
    TrainConfig training;
    RerankConfig rerank;
    std::vector<int> eval_ks{1, 5, 10};
    std::string lexicon_path = "builtin";
    std::string prompt_template = "";  // empty: built-in template
    PipelinePaths paths;

    /// Directory relative paths resolve against (not serialized).
    fs::path base_dir = ".";

    std::string resolve(const std::string& p) const {
        if (p.empty()) return p;
        fs::path path(p);
        return (path.is_absolute() ? path : base_dir / path).lexically_normal().string();
    }
};

// ---------------------------------------------------------------------------
// JSON (de)serialization. Unknown keys are rejected; missing keys keep defaults.

namespace detail {

using json = nlohmann::json;

class ObjectReader {
public:
    ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ConfigError(where_ + "." + key + ": wrong type");
        }
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key \"" + k + "\"");
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline nlohmann::ordered_json config_to_json(const PipelineConfig& c) {
    nlohmann::ordered_json j;
    j["embedder"] = {{"provider", std::string(to_string(c.embedder.provider))},
                     {"dim", c.embedder.dim},
                     {"seed", c.embedder.seed},
                     {"endpoint", c.embedder.endpoint},
                     {"batch_size", c.embedder.batch_size},
                     {"timeout_ms", c.embedder.timeout_ms}};
    j["chunking"] = {{"max_tokens", c.chunking.max_tokens}, {"overlap_tokens", c.chunking.overlap_tokens}};
    j["mining"] = {{"negatives_per_anchor", c.mining.negatives_per_anchor},
                   {"lambda_sim", c.mining.lambda_sim},
                   {"lambda_subj", c.mining.lambda_subj},
                   {"semi_hard_only", c.mining.semi_hard_only}};
    j["training"] = {{"margin", c.training.margin},
                     {"learning_rate", c.training.learning_rate},
                     {"epochs", c.training.epochs},
                     {"batch_size", c.training.batch_size},
                     {"seed", c.training.seed},
                     {"optimizer", "adam"},
                     {"metric", std::string(to_string(c.training.metric))}};
    j["rerank"] = {{"alpha", c.rerank.alpha},
                   {"beta", c.rerank.beta},
                   {"gamma", c.rerank.gamma},
                   {"pool", c.rerank.pool},
                   {"rationale_coverage", c.rerank.rationale_coverage},
                   {"max_rationale_tokens", c.rerank.max_rationale_tokens}};
    j["eval"] = {{"ks", c.eval_ks}};
    j["lexicon_path"] = c.lexicon_path;
    j["prompt_template"] = c.prompt_template;
    j["paths"] = {{"corpus", c.paths.corpus},     {"claims", c.paths.claims}, {"chunks", c.paths.chunks},
                  {"triplets", c.paths.triplets}, {"head", c.paths.head},     {"index", c.paths.index},
                  {"reports", c.paths.reports},   {"cache", c.paths.cache}};
    return j;
}

inline void validate(const PipelineConfig& c) {
    validate(c.embedder);
    validate(c.chunking);
    validate(c.mining);
    validate(c.training);
    validate(c.rerank);
    if (c.eval_ks.empty()) throw ConfigError("eval.ks must not be empty");
    for (int k : c.eval_ks)
        if (k < 1) throw ConfigError("eval.ks values must be >= 1");
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    detail::ObjectReader top(j, "config");
    if (const auto* e = top.sub("embedder")) {
        detail::ObjectReader r(*e, "embedder");
        std::string provider = std::string(to_string(c.embedder.provider));
        r.get("provider", provider);
        c.embedder.provider = parse_provider(provider);
        r.get("dim", c.embedder.dim);
        r.get("seed", c.embedder.seed);
        r.get("endpoint", c.embedder.endpoint);
        r.get("batch_size", c.embedder.batch_size);
        r.get("timeout_ms", c.embedder.timeout_ms);
        r.finish();
    }
    if (const auto* e = top.sub("chunking")) {
        detail::ObjectReader r(*e, "chunking");
        r.get("max_tokens", c.chunking.max_tokens);
        r.get("overlap_tokens", c.chunking.overlap_tokens);
        r.finish();
    }
    if (const auto* e = top.sub("mining")) {
        detail::ObjectReader r(*e, "mining");
        r.get("negatives_per_anchor", c.mining.negatives_per_anchor);
        r.get("lambda_sim", c.mining.lambda_sim);
        r.get("lambda_subj", c.mining.lambda_subj);
        r.get("semi_hard_only", c.mining.semi_hard_only);
        r.finish();
    }
    if (const auto* e = top.sub("training")) {
        detail::ObjectReader r(*e, "training");
        r.get("margin", c.training.margin);
        r.get("learning_rate", c.training.learning_rate);
        r.get("epochs", c.training.epochs);
        r.get("batch_size", c.training.batch_size);
        r.get("seed", c.training.seed);
        std::string optimizer = "adam";
        r.get("optimizer", optimizer);
        if (optimizer != "adam") throw ConfigError("training.optimizer: only \"adam\" is supported");
        std::string metric = std::string(to_string(c.training.metric));
        r.get("metric", metric);
        c.training.metric = parse_metric(metric);
        r.finish();
    }
    if (const auto* e = top.sub("rerank")) {
        detail::ObjectReader r(*e, "rerank");
        r.get("alpha", c.rerank.alpha);
        r.get("beta", c.rerank.beta);
        r.get("gamma", c.rerank.gamma);
        r.get("pool", c.rerank.pool);
        r.get("rationale_coverage", c.rerank.rationale_coverage);
        r.get("max_rationale_tokens", c.rerank.max_rationale_tokens);
        r.finish();
    }
    if (const auto* e = top.sub("eval")) {
        detail::ObjectReader r(*e, "eval");
        r.get("ks", c.eval_ks);
        r.finish();
    }
    top.get("lexicon_path", c.lexicon_path);
    top.get("prompt_template", c.prompt_template);
    if (const auto* e = top.sub("paths")) {
        detail::ObjectReader r(*e, "paths");
        r.get("corpus", c.paths.corpus);
        r.get("claims", c.paths.claims);
        r.get("chunks", c.paths.chunks);
        r.get("triplets", c.paths.triplets);
        r.get("head", c.paths.head);
        r.get("index", c.paths.index);
        r.get("reports", c.paths.reports);
        r.get("cache", c.paths.cache);
        r.finish();
    }
    top.finish();
    validate(c);
    return c;
}

/// Applies "a.b.c=value" overrides; values parse as JSON, falling back to a string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
    std::string pointer;
    std::stringstream keys(assignment.substr(0, eq));
    for (std::string part; std::getline(keys, part, '.');) pointer += "/" + part;
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;
    }
    j[nlohmann::json::json_pointer(pointer)] = value;
}

/// Loads a config file (or defaults when `path` is empty), applies overrides
/// and the CER_EMBED_URL environment variable.
inline PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    nlohmann::json j = nlohmann::json::object();
    fs::path base = ".";
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open config " + path);
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("config " + path + " is not valid JSON: " + e.what());
        }
        base = fs::path(path).parent_path();
        if (base.empty()) base = ".";
    }
    if (const char* url = std::getenv("CER_EMBED_URL"); url && *url) j["embedder"]["endpoint"] = url;
    for (const auto& o : overrides) apply_override(j, o);
    PipelineConfig c = config_from_json(j);
    c.base_dir = base;
    return c;
}

inline std::string config_hash(const PipelineConfig& c) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config_to_json(c).dump())));
    return buf;
}

// ---------------------------------------------------------------------------
// Workspace lock

/// Exclusive advisory lock on <base_dir>/.cer.lock for the lifetime of the object.
class WorkspaceLock {
public:
    explicit WorkspaceLock(const fs::path& dir) {
        const auto path = (dir / ".cer.lock").string();
        fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw DataError("cannot create lock file " + path);
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw DataError("workspace is locked by another cer command (" + path + ")");
        }
    }
    ~WorkspaceLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    WorkspaceLock(const WorkspaceLock&) = delete;
    WorkspaceLock& operator=(const WorkspaceLock&) = delete;

private:
    int fd_ = -1;
};

// ---------------------------------------------------------------------------
// Session: lazily built embedder (with optional cache) and artifact loaders.

class Session {
public:
    explicit Session(PipelineConfig cfg) : cfg_(std::move(cfg)) { validate(cfg_); }

    const PipelineConfig& config() const { return cfg_; }
    std::string path(const std::string& p) const { return cfg_.resolve(p); }

    Embedder& embedder() {
        if (active_) return *active_;
        if (cfg_.embedder.provider == Provider::builtin_hash) {
            base_ = std::make_unique<BuiltinHashEmbedder>(static_cast<std::size_t>(cfg_.embedder.dim),
                                                          cfg_.embedder.seed);
        } else {
            base_ = std::make_unique<RemoteEmbedder>(cfg_.embedder);
        }
        active_ = base_.get();
        if (!cfg_.paths.cache.empty()) {
            ensure_parent(path(cfg_.paths.cache));
            cache_ = std::make_unique<EmbeddingCache>(path(cfg_.paths.cache));
            cached_ = std::make_unique<CachedEmbedder>(*base_, *cache_);
            active_ = cached_.get();
        }
        return *active_;
    }

    /// Remote providers must match the dimension existing artifacts were built with.
    void expect_dim(std::size_t dim) {
        embedder();
        if (auto* remote = dynamic_cast<RemoteEmbedder*>(base_.get())) remote->pin_dim(dim);
    }

    std::vector<Chunk> chunks() const {
        return load_chunks(require(cfg_.paths.chunks, "chunk table", "ingest"));
    }
    std::vector<Claim> claims() const { return load_claims(require(cfg_.paths.claims, "claims file", "")); }
    std::vector<Triplet> triplets() const { return load_triplets(require(cfg_.paths.triplets, "triplets", "mine")); }
    ProjectionHead head() const { return load_head(require(cfg_.paths.head, "head checkpoint", "train")); }
    VectorIndex index() const { return load_index(require(cfg_.paths.index, "index", "index")); }
    SubjectivityLexicon lexicon() const {
        return load_lexicon(cfg_.lexicon_path == "builtin" ? cfg_.lexicon_path : path(cfg_.lexicon_path));
    }

    static void ensure_parent(const std::string& file) {
        const auto parent = fs::path(file).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
    }

    /// Resolved path of an input artifact; a missing file names the producing command.
    std::string require(const std::string& rel, const std::string& what, const std::string& producer) const {
        const std::string p = path(rel);
        if (!fs::exists(p)) {
            std::string msg = "missing " + what + " (" + p + ")";
            if (!producer.empty()) msg += "; run `cer " + producer + "` first";
            throw DataError(msg);
        }
        return p;
    }

private:
    PipelineConfig cfg_;
    std::unique_ptr<Embedder> base_;
    std::unique_ptr<EmbeddingCache> cache_;
    std::unique_ptr<CachedEmbedder> cached_;
    Embedder* active_ = nullptr;
};

// ---------------------------------------------------------------------------
// Commands. Each returns a short human-readable summary.

inline std::string cmd_ingest(Session& s) {
    const auto& cfg = s.config();
    const auto docs = load_corpus(s.require(cfg.paths.corpus, "corpus", ""));
    const auto chunks = chunk_corpus(docs, cfg.chunking);
    const auto out = s.path(cfg.paths.chunks);
    Session::ensure_parent(out);
    save_chunks(chunks, out);
    return "ingested " + std::to_string(docs.size()) + " documents into " + std::to_string(chunks.size()) +
           " chunks -> " + out;
}

inline std::string cmd_mine(Session& s) {
    const auto& cfg = s.config();
    const auto chunks = s.chunks();
    const auto claims = s.claims();
    const auto lex = s.lexicon();
    const auto triplets =
        mine_triplets(claims, chunks, s.embedder(), lex, cfg.mining, cfg.training.metric, cfg.training.margin);
    const auto out = s.path(cfg.paths.triplets);
    Session::ensure_parent(out);
    save_triplets(triplets, out);
    return "mined " + std::to_string(triplets.size()) + " triplets for " + std::to_string(claims.size()) +
           " claims -> " + out;
}

inline std::string loss_curve_csv(const std::vector<double>& curve) {
    std::string out = "epoch,mean_loss\n";
    char buf[64];
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, curve[i]);
        out += buf;
    }
    return out;
}

inline std::string cmd_train(Session& s) {
    const auto& cfg = s.config();
    const auto chunks = s.chunks();
    const auto triplets = s.triplets();
    if (triplets.empty()) throw DataError("no triplets to train on; check labels and rerun `cer mine`");
    Embedder& emb = s.embedder();

    std::set<std::string> needed;
    for (const auto& t : triplets) {
        needed.insert(t.positive_id);
        needed.insert(t.negative_id);
    }
    std::map<std::string, EmbeddingVector> vectors;
    for (const Chunk& c : chunks)
        if (needed.count(c.chunk_id)) vectors.emplace(c.chunk_id, embed_passage(emb, c.text));
    std::map<std::string, EmbeddingVector> anchors;
    const auto examples = resolve_triplets(triplets, vectors, emb, anchors);

    const std::size_t dim = emb.dim() != 0 ? emb.dim() : vectors.begin()->second.dim();
    const ProjectionHead head0 = init_head(dim, dim, cfg.training.metric, cfg.training.seed);
    const TrainResult res = train(head0, examples, cfg.training);

    const auto head_path = s.path(cfg.paths.head);
    Session::ensure_parent(head_path);
    save_head(res.head, head_path);
    const auto reports = s.path(cfg.paths.reports);
    fs::create_directories(reports);
    const auto curve_path = (fs::path(reports) / "loss_curve.csv").string();
    std::ofstream(curve_path, std::ios::binary | std::ios::trunc) << loss_curve_csv(res.loss_curve);

    std::string msg = "trained head (" + std::to_string(res.head.trained_steps) + " steps";
    if (!res.loss_curve.empty()) {
        char buf[96];
        std::snprintf(buf, sizeof buf, ", loss %.4f -> %.4f", res.loss_curve.front(), res.loss_curve.back());
        msg += buf;
    }
    return msg + ") -> " + head_path;
}

inline std::string cmd_index(Session& s) {
    const auto& cfg = s.config();
    const auto chunks = s.chunks();
    const auto head = s.head();
    s.expect_dim(head.d_in);
    const auto index = build_index(chunks, s.embedder(), head, head.metric);
    const auto out = s.path(cfg.paths.index);
    Session::ensure_parent(out);
    save_index(index, out);
    return "indexed " + std::to_string(index.size()) + " chunks (" + std::string(to_string(index.metric)) + ") -> " +
           out;
}

struct QueryOutput {
    std::vector<ExplainedHit> hits;
    std::vector<Chunk> chunks;  // owns the texts `hits` point into
    std::string table;
    nlohmann::ordered_json explanation;
    std::string prompt;
};

inline std::unique_ptr<QueryOutput> cmd_query(Session& s, const std::string& claim, int k) {
    const auto& cfg = s.config();
    // index first so a missing index is reported before anything else
    const auto index = s.index();
    const auto head = s.head();
    s.expect_dim(head.d_in);
    auto out = std::make_unique<QueryOutput>();
    out->chunks = s.chunks();
    const auto lex = s.lexicon();
    std::map<std::string, const Chunk*> by_id;
    for (const Chunk& c : out->chunks) by_id.emplace(c.chunk_id, &c);
    out->hits = explain_query(claim, index, by_id, s.embedder(), head, lex, cfg.rerank, k);

    char buf[128];
    for (const auto& h : out->hits) {
        std::snprintf(buf, sizeof buf, "%3d  %-24s  score=%.4f  sim=%.4f  subj=%.3f  ", h.scored.hit.rank,
                      h.scored.hit.chunk_id.c_str(), h.scored.hit.score, h.scored.base_similarity,
                      h.scored.subjectivity);
        std::string line = buf;
        for (const auto& sp : h.rationale.spans)
            line += "[" + h.chunk->text.substr(sp.byte_start, sp.byte_end - sp.byte_start) + "]";
        out->table += line + "\n";
    }
    if (out->hits.empty()) out->table = "no hits\n";
    out->explanation = explanation_json(claim, out->hits);

    std::string tmpl(kDefaultPromptTemplate);
    if (!cfg.prompt_template.empty()) {
        std::ifstream in(s.require(cfg.prompt_template, "prompt template", ""));
        tmpl.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    out->prompt = assemble_prompt(claim, evidence_items(out->hits), tmpl);
    return out;
}

inline EvalReport cmd_eval(Session& s, const std::vector<int>& ks) {
    const auto& cfg = s.config();
    const auto index = s.index();
    const auto head = s.head();
    s.expect_dim(head.d_in);
    const auto chunks = s.chunks();
    const auto claims = s.claims();
    const auto lex = s.lexicon();
    EvalOptions opt;
    opt.ks = ks.empty() ? cfg.eval_ks : ks;
    opt.rerank_cfg = cfg.rerank;
    opt.config_hash = config_hash(cfg);
    EvalReport rep = run_eval(chunks, claims, index, s.embedder(), head, lex, opt);

    const auto reports = s.path(cfg.paths.reports);
    fs::create_directories(reports);
    std::ofstream(fs::path(reports) / "eval.json", std::ios::binary | std::ios::trunc) << report_json(rep).dump(2)
                                                                                         << '\n';
    std::ofstream(fs::path(reports) / "eval.txt", std::ios::binary | std::ios::trunc) << report_table(rep);
    return rep;
}

inline std::string cmd_project(Session& s) {
    const auto& cfg = s.config();
    const auto head = s.head();
    s.expect_dim(head.d_in);
    const auto chunks = s.chunks();
    const auto groups = split_by_label(chunks);
    std::vector<EmbeddingVector> vecs;
    std::vector<PointLabel> labels;
    for (const Chunk* c : groups.positives) {
        vecs.push_back(project(head, embed_passage(s.embedder(), c->text)));
        labels.push_back(PointLabel::pos);
    }
    for (const Chunk* c : groups.negatives) {
        vecs.push_back(project(head, embed_passage(s.embedder(), c->text)));
        labels.push_back(PointLabel::neg);
    }
    const auto points = pca_project_2d(vecs, labels);
    const auto reports = s.path(cfg.paths.reports);
    fs::create_directories(reports);
    const auto out = (fs::path(reports) / "projection.csv").string();
    std::ofstream(out, std::ios::binary | std::ios::trunc) << projection_csv(points);
    return "projected " + std::to_string(points.size()) + " chunks -> " + out;
}

}  // namespace cer
