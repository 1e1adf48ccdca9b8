#pragma once

#include "reml/core.hpp"
#include "reml/data.hpp"
#include "reml/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace reml::test {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (auto &v : m.data()) {
        v = rng.uniform(lo, hi);
    }
    return m;
}

/// |a - b| / max(|a|, |b|, floor)
inline double rel_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Normalized synthetic train/test pair.
inline Split synthetic_split(std::size_t rows, std::size_t d, double sep, double noise, std::uint64_t seed) {
    const auto ds = synth_icslike(rows, d, sep, noise, seed);
    auto split = stratified_split(ds, 0.8, mix_seed(seed, 99));
    const auto nz = fit_normalizer(split.train);
    split.train = apply_normalizer(nz, split.train);
    split.test = apply_normalizer(nz, split.test);
    return split;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string &tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("reml_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;

    const std::filesystem::path &path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace reml::test
