#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advreg/attacks.hpp"
#include "advreg/data.hpp"
#include "advreg/defenses.hpp"
#include "advreg/net.hpp"
#include "json.hpp"

namespace advreg {

struct TrainConfig {
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 32;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update; t is the 1-based step index.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::size_t t, const TrainConfig& cfg);

struct TrainResult {
    RegressionNet net;
    std::vector<double> loss_history;  // mean training objective per epoch
};

/// Minibatch Adam on the training split. The network has one hidden layer as wide
/// as the input and a sigmoid output for [0, 1]-bounded targets. Throws
/// Error(training_diverged) naming the epoch and step on a non-finite loss.
TrainResult train(const Dataset& dataset, const DefenseConfig& defense, const TrainConfig& cfg);

/// Mean of (y - f(x~))^2 over `rows`, x~ the attacked input.
double attacked_mse(const RegressionNet& net, const Dataset& dataset, std::span<const std::size_t> rows,
                    const AttackConfig& attack);

struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    friend bool operator==(const Interval&, const Interval&) = default;
};

struct SearchSpace {
    Interval delta{0.01, 16.0};
    Interval sigma{0.01, 16.0};
    Interval beta{0.5, 8.0};
    Interval lambda{0.1, 10.0};
    std::size_t n_trials = 20;
    std::size_t n_samples = 100;
    /// Evaluated ahead of the sampled trials.
    std::vector<DefenseConfig> extra_candidates;

    void validate() const;
};

enum class SearchObjective { val_mse_clean, val_mse_pgd };

std::string to_string(SearchObjective objective);
SearchObjective search_objective_from_string(const std::string& name);

struct TrialRecord {
    std::size_t trial = 0;
    DefenseConfig config;
    double objective = 0.0;  // NaN when training diverged
    std::uint64_t seed = 0;
    bool injected = false;
};

nlohmann::json to_json(const TrialRecord& record);

struct SearchResult {
    DefenseConfig best;
    std::size_t best_trial = 0;
    std::vector<TrialRecord> trials;
};

/// Draws every hyperparameter of `kind` uniformly from its interval, one config per
/// trial, trains on the training split and scores the validation split. Returns the
/// lowest score, earliest trial on ties. Trials run on up to `jobs` threads with
/// results independent of the thread count.
SearchResult random_search(const Dataset& dataset, DefenseKind kind, const SearchSpace& space,
                           SearchObjective objective, const TrainConfig& train_cfg, std::uint64_t seed,
                           std::size_t jobs = 1,
                           const AttackConfig& tuning_attack = AttackConfig::pgd_default());

}  // namespace advreg
