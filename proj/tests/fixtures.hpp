#pragma once

#include <cstddef>
#include <random>

#include "advreg/data.hpp"

namespace testsupport {

// y = 1 + 2 x0 + x1 + 0.5 x2 on uniform points in [0, 1]^3, split 60/20/20 with neighbors.
inline advreg::Dataset linear_dataset(std::size_t n = 100, std::uint64_t seed = 1) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    advreg::Dataset ds;
    ds.name = "linear";
    ds.n_rows = n;
    ds.n_features = 3;
    ds.feature_names = {"x0", "x1", "x2"};
    ds.target_name = "y";
    for (std::size_t i = 0; i < n; ++i) {
        const double x0 = u(gen), x1 = u(gen), x2 = u(gen);
        ds.features.insert(ds.features.end(), {x0, x1, x2});
        ds.targets.push_back(1.0 + 2.0 * x0 + x1 + 0.5 * x2);
    }
    ds = advreg::split(ds, {0.6, 0.2, 0.2}, seed);
    ds.neighbors = advreg::compute_neighbors(ds);
    return ds;
}

// Noisy steep targets in 3-D: an unregularized fit has large input gradients,
// so small input perturbations move its predictions a lot.
inline advreg::Dataset fragile_dataset(std::size_t n = 120, std::uint64_t seed = 2) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    advreg::Dataset ds;
    ds.name = "fragile";
    ds.n_rows = n;
    ds.n_features = 3;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double x = u(gen);
            ds.features.push_back(x);
            s += x;
        }
        ds.targets.push_back(10.0 * s + 5.0 * u(gen));
    }
    ds = advreg::split(ds, {0.6, 0.2, 0.2}, seed);
    ds.neighbors = advreg::compute_neighbors(ds);
    return ds;
}

}  // namespace testsupport
