// cer: command-line driver for the evidence re-ranking pipeline.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cer/pipeline.hpp"

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Pipeline config JSON file");
    cmd->add_option("--set", c.sets, "Override a config value, e.g. --set training.epochs=5 (repeatable)")
        ->allow_extra_args(false)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
}

// Adds a flag that becomes a config override when given on the command line.
template <class T>
void add_override(CLI::App* cmd, std::vector<std::pair<CLI::Option*, std::string>>& map, const std::string& flag,
                  const std::string& key, T& storage, const std::string& help) {
    map.emplace_back(cmd->add_option(flag, storage, help + " (" + key + ")"), key);
}

std::string json_literal(const std::string& s) { return nlohmann::json(s).dump(); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrastive evidence retrieval with self-explaining re-ranking"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all commands");

    Common common;
    std::vector<std::pair<CLI::Option*, std::string>> overrides;

    std::string corpus_path;
    int max_tokens = 0, overlap_tokens = 0;
    auto* ingest = app.add_subcommand("ingest", "Load and chunk the corpus into the chunk table");
    add_common(ingest, common);
    add_override(ingest, overrides, "--corpus", "paths.corpus", corpus_path, "Corpus JSONL");
    add_override(ingest, overrides, "--max-tokens", "chunking.max_tokens", max_tokens, "Tokens per chunk");
    add_override(ingest, overrides, "--overlap-tokens", "chunking.overlap_tokens", overlap_tokens, "Overlap");

    int negatives = 0;
    double lambda_sim = 0, lambda_subj = 0;
    bool semi_hard = false;
    std::string claims_path;
    auto* mine = app.add_subcommand("mine", "Mine subjectivity-aware triplets");
    add_common(mine, common);
    add_override(mine, overrides, "--claims", "paths.claims", claims_path, "Claims JSONL");
    add_override(mine, overrides, "--negatives", "mining.negatives_per_anchor", negatives, "Negatives per anchor");
    add_override(mine, overrides, "--lambda-sim", "mining.lambda_sim", lambda_sim, "Similarity weight");
    add_override(mine, overrides, "--lambda-subj", "mining.lambda_subj", lambda_subj, "Subjectivity weight");
    auto* semi_flag = mine->add_flag("--semi-hard", semi_hard, "Keep only semi-hard negatives (mining.semi_hard_only)");

    int epochs = 0, batch_size = 0;
    double lr = 0, margin = 0;
    std::uint64_t seed = 0;
    std::string metric;
    auto* train = app.add_subcommand("train", "Train the projection head");
    add_common(train, common);
    add_override(train, overrides, "--epochs", "training.epochs", epochs, "Epochs");
    add_override(train, overrides, "--lr", "training.learning_rate", lr, "Learning rate");
    add_override(train, overrides, "--margin", "training.margin", margin, "Triplet margin");
    add_override(train, overrides, "--batch-size", "training.batch_size", batch_size, "Mini-batch size");
    add_override(train, overrides, "--seed", "training.seed", seed, "Training seed");
    add_override(train, overrides, "--metric", "training.metric", metric, "cosine or euclidean");

    auto* index = app.add_subcommand("index", "Build the vector index with the trained head");
    add_common(index, common);

    std::string claim;
    int k = 10;
    bool explain = false, prompt = false;
    auto* query = app.add_subcommand("query", "Retrieve, re-rank and explain evidence for a claim");
    add_common(query, common);
    query->add_option("claim", claim, "Claim text")->required();
    query->add_option("-k,--k", k, "Number of hits")->check(CLI::NonNegativeNumber);
    query->add_flag("--explain", explain, "Print the explanation JSON");
    query->add_flag("--prompt", prompt, "Print the assembled evidence prompt");

    std::vector<int> ks;
    auto* eval = app.add_subcommand("eval", "Evaluate retrieval and write reports");
    add_common(eval, common);
    eval->add_option("--k", ks, "Cutoffs, e.g. --k 1,5,10")->delimiter(',')->check(CLI::PositiveNumber);

    auto* projection = app.add_subcommand("project", "Write a 2-D PCA projection of labeled chunks");
    add_common(projection, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        std::vector<std::string> sets = common.sets;
        for (const auto& [opt, key] : overrides) {
            if (opt->count() == 0) continue;
            const std::string raw = opt->as<std::string>();
            // string-valued keys are quoted so that e.g. a path "1" stays a string
            const bool is_string = key.rfind("paths.", 0) == 0 || key == "training.metric";
            sets.push_back(key + "=" + (is_string ? json_literal(raw) : raw));
        }
        if (semi_flag->count()) sets.push_back("mining.semi_hard_only=true");

        cer::Session session(cer::load_config(common.config, sets));
        cer::WorkspaceLock lock(session.config().base_dir);

        if (*ingest) {
            std::cout << cer::cmd_ingest(session) << '\n';
        } else if (*mine) {
            std::cout << cer::cmd_mine(session) << '\n';
        } else if (*train) {
            std::cout << cer::cmd_train(session) << '\n';
        } else if (*index) {
            std::cout << cer::cmd_index(session) << '\n';
        } else if (*query) {
            const auto out = cer::cmd_query(session, claim, k);
            if (explain) {
                std::cout << out->explanation.dump(2) << '\n';
            } else if (!prompt) {
                std::cout << out->table;
            }
            if (prompt) std::cout << out->prompt;
        } else if (*eval) {
            std::cout << cer::report_table(cer::cmd_eval(session, ks));
        } else if (*projection) {
            std::cout << cer::cmd_project(session) << '\n';
        }
    } catch (const cer::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const cer::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
