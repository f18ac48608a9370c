#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "cer/embedding.hpp"
#include "cer/projection.hpp"
#include "cer/rng.hpp"
#include "oracles.hpp"

namespace testutil {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("cer-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline cer::EmbeddingVector random_vector(cer::Rng& rng, std::size_t d, double scale = 1.0) {
    cer::EmbeddingVector v(d);
    for (double& x : v.values) x = scale * rng.normal();
    return v;
}

inline cer::EmbeddingVector random_unit(cer::Rng& rng, std::size_t d) {
    auto v = random_vector(rng, d);
    return cer::normalized(v);
}

inline cer::ProjectionHead random_head(cer::Rng& rng, std::size_t d_out, std::size_t d_in, cer::Metric metric) {
    cer::ProjectionHead h;
    h.d_in = d_in;
    h.d_out = d_out;
    h.metric = metric;
    h.W.resize(d_in * d_out);
    for (double& w : h.W) w = rng.normal() / std::sqrt(static_cast<double>(d_in));
    return h;
}

inline oracle::Mat to_mat(const cer::ProjectionHead& h) {
    oracle::Mat m(h.d_out, oracle::Vec(h.d_in));
    for (std::size_t r = 0; r < h.d_out; ++r)
        for (std::size_t c = 0; c < h.d_in; ++c) m[r][c] = h.W[r * h.d_in + c];
    return m;
}

/// Maximum relative error, with a floor on the denominator for entries near zero.
inline double max_rel_error(const std::vector<double>& analytic, const oracle::Mat& numeric, double floor = 1e-3) {
    double worst = 0;
    const std::size_t cols = numeric[0].size();
    for (std::size_t r = 0; r < numeric.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const double a = analytic[r * cols + c], n = numeric[r][c];
            worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
        }
    return worst;
}

}  // namespace testutil
