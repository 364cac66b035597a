#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advreg/defenses.hpp"
#include "json.hpp"

namespace advreg {

enum class Split : std::uint8_t { train, val, test };

std::string to_string(Split s);

struct Normalizer {
    std::vector<double> mean;
    std::vector<double> std;  // population formula; constant features get 1

    friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

/**
 * Regression data set: a row-major feature matrix with one target per row.
 *
 * After `prepare_dataset` the features are z-scored with training statistics and
 * `neighbors[i]` holds row i's nearest *training* row (excluding i itself) under
 * the L-infinity norm.
 */
struct Dataset {
    std::string name;
    std::vector<std::string> feature_names;
    std::string target_name;
    std::size_t n_rows = 0;
    std::size_t n_features = 0;
    std::vector<double> features;
    std::vector<double> targets;
    std::vector<Split> split;
    bool target_bounded_01 = false;

    std::optional<Normalizer> normalizer;
    std::vector<NeighborInfo> neighbors;

    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(features).subspan(i * n_features, n_features);
    }
    std::vector<std::size_t> rows_in(Split s) const;
    std::size_t count(Split s) const;
};

struct CsvOptions {
    std::string name;
    std::string target_column;
    bool target_bounded_01 = false;
    /// Drop every feature column with a missing cell instead of dropping rows.
    bool drop_missing_columns = false;
};

/// Cells that are empty, "?", "NA" or "NaN" count as missing. Rows missing the
/// target or (unless drop_missing_columns) any feature are dropped; any other
/// non-numeric cell is a parse error naming its line.
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options);

/// Seeded shuffle, then floor(n * fraction) rows per split with the remainder
/// assigned to the training split. Fractions are (train, val, test).
Dataset split(Dataset dataset, std::array<double, 3> fractions, std::uint64_t seed);

/// Mean and population standard deviation of each feature over training rows.
Normalizer fit_normalizer(const Dataset& dataset);
void apply_normalizer(const Normalizer& normalizer, std::span<double> features, std::size_t n_features);

/// Exact brute-force nearest training neighbor of every row (self excluded,
/// ties to the lowest row index) under L-infinity.
std::vector<NeighborInfo> compute_neighbors(const Dataset& dataset);

/// load -> split -> normalize -> neighbors.
Dataset prepare_dataset(const std::filesystem::path& path, const CsvOptions& options,
                        std::array<double, 3> fractions, std::uint64_t seed);

nlohmann::json to_json(const Dataset& dataset);
Dataset dataset_from_json(const nlohmann::json& j);

}  // namespace advreg
