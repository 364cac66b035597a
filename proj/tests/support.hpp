#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "advreg/net.hpp"

namespace testsupport {

// Independent forward pass written straight from the network formula.
struct Oracle {
    std::vector<double> pre;
    double out = 0.0;
};

inline Oracle oracle_forward(const advreg::RegressionNet& net, std::span<const double> x) {
    const std::size_t in = net.input_dim();
    const std::size_t h = net.hidden_dim();
    const auto p = net.params();
    Oracle o;
    o.pre.resize(h);
    double z = p[in * h + 2 * h];
    for (std::size_t j = 0; j < h; ++j) {
        double s = p[in * h + j];
        for (std::size_t k = 0; k < in; ++k) s += p[j * in + k] * x[k];
        o.pre[j] = s;
        z += p[in * h + h + j] * std::max(0.0, s);
    }
    o.out = net.output_activation() == advreg::OutputActivation::sigmoid ? 1.0 / (1.0 + std::exp(-z)) : z;
    return o;
}

inline double min_abs_pre(const advreg::RegressionNet& net, std::span<const double> x) {
    const auto o = oracle_forward(net, x);
    double m = INFINITY;
    for (double v : o.pre) m = std::min(m, std::abs(v));
    return m;
}

inline advreg::RegressionNet random_net(std::mt19937_64& gen, std::size_t in, std::size_t hidden,
                                        advreg::OutputActivation act = advreg::OutputActivation::identity,
                                        double scale = 1.0) {
    advreg::RegressionNet net(in, hidden, act);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (double& p : net.params()) p = u(gen);
    return net;
}

inline std::vector<double> random_vector(std::mt19937_64& gen, std::size_t n, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<double> v(n);
    for (double& x : v) x = u(gen);
    return v;
}

// Central differences of f over the network parameters.
inline std::vector<double> fd_params(advreg::RegressionNet net, const std::function<double(const advreg::RegressionNet&)>& f,
                                     double h = 1e-5) {
    std::vector<double> g(net.parameter_count());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double keep = net.params()[i];
        net.params()[i] = keep + h;
        const double up = f(net);
        net.params()[i] = keep - h;
        const double down = f(net);
        net.params()[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// Largest componentwise error relative to the larger gradient magnitude, with a
// small absolute floor so exact zeros compare cleanly.
inline double rel_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
    double scale = floor;
    for (std::size_t i = 0; i < a.size(); ++i) scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst / scale;
}

}  // namespace testsupport
