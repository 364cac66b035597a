#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "advreg/attacks.hpp"
#include "advreg/data.hpp"
#include "advreg/defenses.hpp"
#include "advreg/evaluation.hpp"
#include "advreg/training.hpp"
#include "json.hpp"

namespace advreg {

struct DatasetSpec {
    std::filesystem::path path;
    std::string target_column;
    std::string name;
    bool bounded_target = false;
    bool drop_missing_columns = false;
};

/**
 * Everything one reproducible run needs. Defaults give the standard protocol:
 * FGSM(0.1) and 10-step PGD(0.025, 0.1), search intervals for delta/sigma/beta/lambda,
 * 100 stability samples, six evaluation seeds and model selection on validation PGD MSE.
 *
 * All randomness derives from `seed`: split, search, and evaluation each get a
 * stage-labelled seed, which in turn labels every trial and training run.
 */
struct ExperimentConfig {
    DatasetSpec dataset;
    std::array<double, 3> split_fractions{0.6, 0.2, 0.2};
    std::uint64_t seed = 0;
    std::vector<DefenseKind> defenses{DefenseKind::none, DefenseKind::pseudo_huber, DefenseKind::grad_reg,
                                      DefenseKind::ansr, DefenseKind::combined};
    /// Parameters used for any defense that has not been tuned.
    DefenseConfig defense_params;
    SearchSpace search;
    SearchObjective objective = SearchObjective::val_mse_pgd;
    std::vector<AttackConfig> attacks{AttackConfig::clean(), AttackConfig::fgsm_default(),
                                      AttackConfig::pgd_default()};
    TrainConfig train;
    std::size_t n_seeds = 6;
    std::size_t jobs = 0;
    std::filesystem::path output_dir = "out";

    /// Throws Error(config_error) whose message lists every invalid field.
    void validate() const;
};

/// Missing keys keep their defaults; relative paths resolve against `base_dir`.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Output file locations under cfg.output_dir.
struct OutputPaths {
    std::filesystem::path dataset_cache;
    std::filesystem::path tune_dir;
    std::filesystem::path cells_csv;
    std::filesystem::path points_csv;
    std::filesystem::path summary_json;

    explicit OutputPaths(const std::filesystem::path& out_dir);
    std::filesystem::path best_config(DefenseKind kind) const;
    std::filesystem::path trial_log(DefenseKind kind) const;
};

/// load -> split -> normalize -> neighbors, then writes the dataset cache.
Dataset run_prepare(const ExperimentConfig& cfg);

/// Reuses the cache when it was produced from the same data source, split and seed.
Dataset load_or_prepare(const ExperimentConfig& cfg);

/// Random search for every configured defense that has hyperparameters; writes
/// <defense>.best.json and <defense>.trials.jsonl under tune/.
std::map<DefenseKind, SearchResult> run_tune(const ExperimentConfig& cfg);

/// Tuned parameters when a best-config file exists, otherwise cfg.defense_params.
DefenseConfig resolve_defense(const ExperimentConfig& cfg, DefenseKind kind);

/// Evaluates every configured defense under every configured attack and writes the
/// per-seed cells CSV, per-point CSV and summary JSON. Files are rewritten after
/// each defense so partial results survive an abort.
EvalReport run_evaluate(const ExperimentConfig& cfg);

/// Table of mean (std) per defense and attack, recomputed from the cells CSV.
std::string run_report(const ExperimentConfig& cfg);

}  // namespace advreg
