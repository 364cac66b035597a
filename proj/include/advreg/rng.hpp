#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace advreg {

/// Seed for a pipeline stage: the master seed mixed with a stage label and an index.
/// Independent tasks (trials, evaluation seeds) get disjoint streams regardless of
/// the order in which they run.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index = 0);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace advreg
