#pragma once

// Helpers for driving the cer binary against a scratch copy of the demo workspace.

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>

namespace testutil {

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr interleaved
};

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return out + "'";
}

inline CliResult run_cli(const std::string& args) {
    const std::string cmd = shell_quote(CER_BINARY) + " " + args + " 2>&1";
    CliResult r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

/// Copies the shipped demo corpus, claims and config into `dir`.
inline void copy_demo(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    for (const char* f : {"corpus.jsonl", "claims.jsonl", "config.json"})
        fs::copy_file(fs::path(CER_DEMO_DIR) / f, dir / f, fs::copy_options::overwrite_existing);
}

}  // namespace testutil
