#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "advreg/attacks.hpp"
#include "advreg/data.hpp"
#include "advreg/defenses.hpp"
#include "advreg/training.hpp"
#include "json.hpp"

namespace advreg {

/// Test MSE of one (defense, attack) pair for one training seed.
struct CellRecord {
    std::string dataset;
    std::string defense;
    std::string attack;
    std::size_t seed = 0;
    double test_mse = 0.0;
};

/// Mean and sample standard deviation over seeds; std is absent for a single seed.
struct CellAggregate {
    std::string dataset;
    std::string defense;
    std::string attack;
    std::size_t n_seeds = 0;
    double mean = 0.0;
    std::optional<double> std;
};

/// Response-space effect of an attack on one test point.
struct PointRecord {
    std::string defense;
    std::size_t seed = 0;
    std::size_t index = 0;      // row in the data set
    double y = 0.0;
    double f_clean = 0.0;       // f(x)
    double f_adv = 0.0;         // f(x~)
    double error_adv = 0.0;     // |f(x~) - y|
    double shift = 0.0;         // |f(x~) - f(x)|
    double nn_distance = 0.0;   // L-inf distance to the nearest training point
};

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> counts;
};

/// `bins` equal-width bins over [0, max value]; the maximum lands in the last bin.
Histogram make_histogram(const std::vector<double>& values, std::size_t bins = 30);

struct PerturbationProfile {
    std::vector<PointRecord> points;
    Histogram error_histogram;  // of |f(x~) - y|
};

PerturbationProfile perturbation_profile(const RegressionNet& net, const Dataset& dataset,
                                         const AttackConfig& attack, const std::string& defense_label = "",
                                         std::size_t seed = 0);

struct EvalReport {
    std::vector<CellRecord> cells;
    std::vector<PointRecord> points;
    std::vector<std::string> flags;

    void append(const EvalReport& other);
};

/// Trains one network per seed (seed i uses derive_seed(master_seed, "evaluate/<defense>", i))
/// and scores the test split under each attack. Per-point PGD records are collected for
/// every PGD attack in the list.
EvalReport evaluate_defense(const Dataset& dataset, const DefenseConfig& defense,
                            const std::vector<AttackConfig>& attacks, std::size_t n_seeds,
                            const TrainConfig& train_cfg, std::uint64_t master_seed, std::size_t jobs = 1);

EvalReport evaluate_cell(const Dataset& dataset, const DefenseConfig& defense, const AttackConfig& attack,
                         std::size_t n_seeds, const TrainConfig& train_cfg, std::uint64_t master_seed,
                         std::size_t jobs = 1);

/// Aggregates in first-appearance order of (dataset, defense, attack).
std::vector<CellAggregate> aggregate(const std::vector<CellRecord>& cells);

/// Flags cells whose mean attacked MSE falls below the clean MSE of the same defense.
std::vector<std::string> monotonicity_flags(const std::vector<CellAggregate>& aggregates);

/// Three significant digits in scientific notation, e.g. 2.50E+01.
std::string format_sci3(double value);

void write_cells_csv(std::ostream& out, const std::vector<CellRecord>& cells);
std::vector<CellRecord> read_cells_csv(std::istream& in);
void write_points_csv(std::ostream& out, const std::vector<PointRecord>& points);

/// Table-shaped summary: aggregates formatted with format_sci3 plus the flags and,
/// per defense, the histogram of PGD error magnitudes.
nlohmann::json summary_json(const std::vector<CellAggregate>& aggregates,
                            const std::vector<PointRecord>& points,
                            const std::vector<std::string>& flags);

}  // namespace advreg
