#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "qflow/grid.hpp"

namespace qflow::test {

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("qflow_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline bool bitwise_equal(const ScalarField& a, const ScalarField& b) {
    if (!(a.grid() == b.grid())) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
    return true;
}

/// Uniform noise in [-amplitude, amplitude] at every grid point (not smooth).
inline ScalarField white_noise(const TorusGrid& g, double amplitude, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-amplitude, amplitude);
    ScalarField f(g);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = dist(rng);
    return f;
}

inline double max_abs(const ScalarField& f) { return std::max(std::abs(f.max()), std::abs(f.min())); }

}  // namespace qflow::test
