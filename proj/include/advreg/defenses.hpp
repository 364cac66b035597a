#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "advreg/net.hpp"
#include "advreg/rng.hpp"
#include "json.hpp"

namespace advreg {

enum class DefenseKind { none, pseudo_huber, grad_reg, ansr, combined };

std::string to_string(DefenseKind kind);
DefenseKind defense_kind_from_string(const std::string& name);

/// Training objective selection. Parameters that the kind does not use are ignored
/// but must still be finite.
struct DefenseConfig {
    DefenseKind kind = DefenseKind::none;
    double delta = 1.0;   // pseudo-Huber steepness
    double sigma = 0.1;   // gradient penalty strength
    double lambda = 1.0;  // stability penalty strength
    double beta = 1.0;    // stability ball radius, in units of the nearest-neighbor distance
    std::size_t n_samples = 100;

    void validate() const;

    bool uses_pseudo_huber() const { return kind == DefenseKind::pseudo_huber || kind == DefenseKind::combined; }
    bool uses_grad_penalty() const { return kind == DefenseKind::grad_reg || kind == DefenseKind::combined; }
    bool uses_stability_penalty() const { return kind == DefenseKind::ansr || kind == DefenseKind::combined; }

    /// Loss applied to y - f(x).
    Loss primary_loss() const;

    friend bool operator==(const DefenseConfig&, const DefenseConfig&) = default;
};

nlohmann::json to_json(const DefenseConfig& cfg);
DefenseConfig defense_from_json(const nlohmann::json& j);

/// A training point's nearest training neighbor under the L-infinity norm.
struct NeighborInfo {
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    std::size_t nn_index = npos;
    double nn_distance = 0.0;
    double label_gap = 0.0;

    friend bool operator==(const NeighborInfo&, const NeighborInfo&) = default;
};

double pseudo_huber(double a, double delta);

/// Monte-Carlo estimate of the gated stability penalty at x: the mean over
/// cfg.n_samples uniform draws dx from the L-infinity ball of radius
/// beta * nn_distance of (dy * [|dy| > label_gap])^2, dy = f(x) - f(x + dx).
/// Consumes n_samples * input_dim uniforms from rng.
double ansr_penalty(const RegressionNet& net, std::span<const double> x, const NeighborInfo& neighbor,
                    const DefenseConfig& cfg, Rng& rng);

/// Parameter gradient of lambda * ansr_penalty for the same draws (the gate is held
/// constant per sample). Consumes the same uniforms as ansr_penalty, so a copy of
/// the generator reproduces the samples.
std::vector<double> ansr_param_grad(const RegressionNet& net, std::span<const double> x,
                                    const NeighborInfo& neighbor, const DefenseConfig& cfg, Rng& rng);

struct LossAndGrad {
    double value = 0.0;
    std::vector<double> grad;
};

/// Pointwise training objective of a defense and its parameter gradient.
/// `neighbor` is only consulted by kinds with the stability penalty.
LossAndGrad total_loss_grad(const RegressionNet& net, std::span<const double> x, double y,
                            const NeighborInfo& neighbor, const DefenseConfig& cfg, Rng& rng);

}  // namespace advreg
