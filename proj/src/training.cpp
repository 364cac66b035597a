#include "advreg/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "advreg/error.hpp"
#include "advreg/parallel.hpp"
#include "advreg/rng.hpp"

namespace advreg {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw Error(ErrorCode::invalid_argument, "learning_rate must be positive");
    }
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
        throw Error(ErrorCode::invalid_argument, "Adam betas must lie in (0, 1)");
    }
    if (!(adam_eps > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "adam_eps must be positive");
    }
    if (batch_size < 1 || epochs < 1) {
        throw Error(ErrorCode::invalid_argument, "batch_size and epochs must be positive");
    }
}

nlohmann::json to_json(const TrainConfig& cfg) {
    return {
        {"learning_rate", cfg.learning_rate}, {"adam_beta1", cfg.adam_beta1},
        {"adam_beta2", cfg.adam_beta2},       {"adam_eps", cfg.adam_eps},
        {"batch_size", cfg.batch_size},       {"epochs", cfg.epochs},
        {"seed", cfg.seed},
    };
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig cfg) {
    try {
        cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
        cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
        cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
        cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.epochs = j.value("epochs", cfg.epochs);
        cfg.seed = j.value("seed", cfg.seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("malformed training record: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::size_t t, const TrainConfig& cfg) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw Error(ErrorCode::dimension_mismatch, "Adam parameter, gradient and state sizes differ");
    }
    if (t < 1) {
        throw Error(ErrorCode::invalid_argument, "Adam step index starts at 1");
    }
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / correction1;
        const double v_hat = state.v[i] / correction2;
        params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
}

TrainResult train(const Dataset& dataset, const DefenseConfig& defense, const TrainConfig& cfg) {
    cfg.validate();
    defense.validate();
    std::vector<std::size_t> rows = dataset.rows_in(Split::train);
    if (rows.empty()) {
        throw Error(ErrorCode::invalid_argument, "training split is empty");
    }
    if (defense.uses_stability_penalty() && dataset.neighbors.size() != dataset.n_rows) {
        throw Error(ErrorCode::invalid_argument, "stability penalty needs precomputed nearest neighbors");
    }

    const auto act = dataset.target_bounded_01 ? OutputActivation::sigmoid : OutputActivation::identity;
    TrainResult result{RegressionNet::make_default(dataset.n_features, act, derive_seed(cfg.seed, "init")), {}};
    RegressionNet& net = result.net;
    // Start the output at the mean training target so no update budget is spent on the offset.
    double target_mean = 0.0;
    for (std::size_t i : rows) target_mean += dataset.targets[i];
    target_mean /= static_cast<double>(rows.size());
    if (act == OutputActivation::sigmoid) {
        const double p = std::clamp(target_mean, 1e-6, 1.0 - 1e-6);
        net.b2() = std::log(p / (1.0 - p));
    } else {
        net.b2() = target_mean;
    }

    std::mt19937_64 order_engine(derive_seed(cfg.seed, "minibatch"));
    Rng sample_rng(derive_seed(cfg.seed, "stability"));
    AdamState state(net.parameter_count());
    std::vector<double> batch_grad(net.parameter_count());
    const NeighborInfo no_neighbor;

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(rows.begin(), rows.end(), order_engine);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < rows.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(rows.size(), start + cfg.batch_size);
            std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t i = rows[b];
                const NeighborInfo& nbr = dataset.neighbors.empty() ? no_neighbor : dataset.neighbors[i];
                const LossAndGrad lg = total_loss_grad(net, dataset.row(i), dataset.targets[i], nbr, defense, sample_rng);
                batch_loss += lg.value;
                for (std::size_t p = 0; p < batch_grad.size(); ++p) batch_grad[p] += lg.grad[p];
            }
            ++step;
            if (!std::isfinite(batch_loss)) {
                throw Error(ErrorCode::training_diverged, "non-finite training loss at epoch " +
                                                              std::to_string(epoch + 1) + ", step " +
                                                              std::to_string(step));
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (double& g : batch_grad) g *= inv;
            adam_step(net.params(), batch_grad, state, step, cfg);
            if (!net.all_finite()) {
                throw Error(ErrorCode::training_diverged, "non-finite weights after epoch " +
                                                              std::to_string(epoch + 1) + ", step " +
                                                              std::to_string(step));
            }
            epoch_loss += batch_loss;
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(rows.size()));
    }
    return result;
}

double attacked_mse(const RegressionNet& net, const Dataset& dataset, std::span<const std::size_t> rows,
                    const AttackConfig& attack_cfg) {
    if (rows.empty()) {
        throw Error(ErrorCode::invalid_argument, "cannot score an empty split");
    }
    double sum = 0.0;
    for (std::size_t i : rows) {
        const double y = dataset.targets[i];
        const auto adv = attack(net, dataset.row(i), y, attack_cfg);
        const double err = y - forward(net, adv);
        sum += err * err;
    }
    return sum / static_cast<double>(rows.size());
}

void SearchSpace::validate() const {
    for (const Interval& iv : {delta, sigma, beta, lambda}) {
        if (!(iv.lo < iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi)) {
            throw Error(ErrorCode::invalid_argument, "search interval lower bound must be below the upper bound");
        }
    }
    if (n_trials + extra_candidates.size() < 1) {
        throw Error(ErrorCode::invalid_argument, "random search needs at least one trial");
    }
    if (n_samples < 1) {
        throw Error(ErrorCode::invalid_argument, "n_samples must be at least 1");
    }
}

std::string to_string(SearchObjective objective) {
    return objective == SearchObjective::val_mse_pgd ? "val_mse_pgd" : "val_mse_clean";
}

SearchObjective search_objective_from_string(const std::string& name) {
    if (name == "val_mse_pgd") return SearchObjective::val_mse_pgd;
    if (name == "val_mse_clean") return SearchObjective::val_mse_clean;
    throw Error(ErrorCode::invalid_argument, "unknown search objective '" + name + "'");
}

nlohmann::json to_json(const TrialRecord& record) {
    nlohmann::json j = {
        {"trial", record.trial},
        {"config", to_json(record.config)},
        {"seed", record.seed},
        {"injected", record.injected},
    };
    if (std::isfinite(record.objective)) {
        j["objective"] = record.objective;
    } else {
        j["objective"] = nullptr;
    }
    return j;
}

SearchResult random_search(const Dataset& dataset, DefenseKind kind, const SearchSpace& space,
                           SearchObjective objective, const TrainConfig& train_cfg, std::uint64_t seed,
                           std::size_t jobs, const AttackConfig& tuning_attack) {
    space.validate();
    train_cfg.validate();
    const std::string label = "search/" + to_string(kind);
    const std::size_t n_injected = space.extra_candidates.size();
    const std::size_t total = n_injected + space.n_trials;

    std::vector<TrialRecord> trials(total);
    for (std::size_t t = 0; t < total; ++t) {
        TrialRecord& rec = trials[t];
        rec.trial = t;
        rec.seed = derive_seed(seed, label + "/train", t);
        if (t < n_injected) {
            rec.config = space.extra_candidates[t];
            rec.config.kind = kind;
            rec.injected = true;
            continue;
        }
        Rng rng(derive_seed(seed, label + "/sample", t));
        DefenseConfig& c = rec.config;
        c.kind = kind;
        c.n_samples = space.n_samples;
        if (c.uses_pseudo_huber()) c.delta = rng.uniform(space.delta.lo, space.delta.hi);
        if (c.uses_grad_penalty()) c.sigma = rng.uniform(space.sigma.lo, space.sigma.hi);
        if (c.uses_stability_penalty()) {
            c.beta = rng.uniform(space.beta.lo, space.beta.hi);
            c.lambda = rng.uniform(space.lambda.lo, space.lambda.hi);
        }
    }

    const auto val_rows = dataset.rows_in(Split::val);
    const AttackConfig scoring =
        objective == SearchObjective::val_mse_pgd ? tuning_attack : AttackConfig::clean();
    parallel_for(total, jobs, [&](std::size_t t) {
        TrialRecord& rec = trials[t];
        TrainConfig cfg = train_cfg;
        cfg.seed = rec.seed;
        try {
            const TrainResult trained = train(dataset, rec.config, cfg);
            rec.objective = attacked_mse(trained.net, dataset, val_rows, scoring);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::training_diverged) throw;
            rec.objective = std::numeric_limits<double>::quiet_NaN();
        }
    });

    SearchResult result;
    bool found = false;
    for (const TrialRecord& rec : trials) {
        if (!std::isfinite(rec.objective)) continue;
        if (!found || rec.objective < trials[result.best_trial].objective) {
            result.best_trial = rec.trial;
            found = true;
        }
    }
    result.trials = std::move(trials);
    if (!found) {
        std::string log;
        for (const auto& rec : result.trials) log += "\n" + to_json(rec).dump();
        throw Error(ErrorCode::training_diverged, "every random-search trial diverged:" + log);
    }
    result.best = result.trials[result.best_trial].config;
    return result;
}

}  // namespace advreg
