#include "advreg/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "advreg/error.hpp"

namespace advreg {

namespace {

std::vector<std::string> split_line(const std::string& line, char sep) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) cells.push_back(cell);
    if (!line.empty() && line.back() == sep) cells.emplace_back();
    return cells;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "?" || cell == "NA" || cell == "NaN" || cell == "nan";
}

std::optional<double> parse_number(const std::string& cell) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

std::vector<std::size_t> Dataset::rows_in(Split s) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (split[i] == s) rows.push_back(i);
    }
    return rows;
}

std::size_t Dataset::count(Split s) const {
    return static_cast<std::size_t>(std::count(split.begin(), split.end(), s));
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open data file '" + path.string() + "'");
    }

    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::parse_error, "data file '" + path.string() + "' is empty");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = split_line(line, ',');
    for (auto& h : header) h = trim(h);

    const auto target_it = std::find(header.begin(), header.end(), options.target_column);
    if (target_it == header.end()) {
        throw Error(ErrorCode::parse_error,
                    "target column '" + options.target_column + "' not found in '" + path.string() + "'");
    }
    const std::size_t target_col = static_cast<std::size_t>(target_it - header.begin());
    const std::size_t n_cols = header.size();

    // First pass: parse every cell, remembering which are missing.
    std::vector<std::vector<std::optional<double>>> rows;
    std::vector<std::size_t> bad_lines;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_line(line, ',');
        if (cells.size() != n_cols) {
            bad_lines.push_back(line_no);
            continue;
        }
        std::vector<std::optional<double>> parsed(n_cols);
        bool bad = false;
        for (std::size_t c = 0; c < n_cols; ++c) {
            const std::string cell = trim(cells[c]);
            if (is_missing(cell)) continue;
            parsed[c] = parse_number(cell);
            if (!parsed[c]) bad = true;
        }
        if (bad) {
            bad_lines.push_back(line_no);
            continue;
        }
        rows.push_back(std::move(parsed));
    }
    if (!bad_lines.empty()) {
        std::string list;
        for (std::size_t i = 0; i < bad_lines.size() && i < 20; ++i) {
            list += (i ? ", " : "") + std::to_string(bad_lines[i]);
        }
        if (bad_lines.size() > 20) list += ", ...";
        throw Error(ErrorCode::parse_error,
                    "unparseable rows in '" + path.string() + "' at line(s) " + list);
    }

    std::vector<std::size_t> feature_cols;
    for (std::size_t c = 0; c < n_cols; ++c) {
        if (c == target_col) continue;
        if (options.drop_missing_columns) {
            const bool any_missing = std::any_of(rows.begin(), rows.end(),
                                                 [c](const auto& r) { return !r[c].has_value(); });
            if (any_missing) continue;
        }
        feature_cols.push_back(c);
    }
    if (feature_cols.empty()) {
        throw Error(ErrorCode::parse_error, "no usable feature columns in '" + path.string() + "'");
    }

    Dataset ds;
    ds.name = options.name.empty() ? path.stem().string() : options.name;
    ds.target_name = options.target_column;
    ds.target_bounded_01 = options.target_bounded_01;
    ds.n_features = feature_cols.size();
    for (std::size_t c : feature_cols) ds.feature_names.push_back(header[c]);
    for (const auto& r : rows) {
        if (!r[target_col]) continue;
        const bool complete =
            std::all_of(feature_cols.begin(), feature_cols.end(), [&r](std::size_t c) { return r[c].has_value(); });
        if (!complete) continue;
        for (std::size_t c : feature_cols) ds.features.push_back(*r[c]);
        ds.targets.push_back(*r[target_col]);
    }
    ds.n_rows = ds.targets.size();
    if (ds.n_rows == 0) {
        throw Error(ErrorCode::parse_error, "no complete rows in '" + path.string() + "'");
    }
    if (ds.target_bounded_01) {
        for (double y : ds.targets) {
            if (y < 0.0 || y > 1.0) {
                throw Error(ErrorCode::parse_error, "target outside [0, 1] in a bounded-target data set");
            }
        }
    }
    ds.split.assign(ds.n_rows, Split::train);
    return ds;
}

Dataset split(Dataset dataset, std::array<double, 3> fractions, std::uint64_t seed) {
    double total = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0) || !std::isfinite(f)) {
            throw Error(ErrorCode::invalid_argument, "split fractions must be positive");
        }
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw Error(ErrorCode::invalid_argument, "split fractions must sum to 1");
    }
    const std::size_t n = dataset.n_rows;
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fractions[1] + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fractions[2] + 1e-9));
    if (n_val == 0 || n_test == 0 || n_val + n_test >= n) {
        throw Error(ErrorCode::invalid_argument,
                    "split of " + std::to_string(n) + " rows leaves an empty partition");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 engine(seed);
    std::shuffle(order.begin(), order.end(), engine);

    const std::size_t n_train = n - n_val - n_test;
    dataset.split.assign(n, Split::train);
    for (std::size_t i = n_train; i < n_train + n_val; ++i) dataset.split[order[i]] = Split::val;
    for (std::size_t i = n_train + n_val; i < n; ++i) dataset.split[order[i]] = Split::test;
    return dataset;
}

Normalizer fit_normalizer(const Dataset& dataset) {
    const auto rows = dataset.rows_in(Split::train);
    if (rows.empty()) {
        throw Error(ErrorCode::invalid_argument, "cannot fit a normalizer without training rows");
    }
    const std::size_t d = dataset.n_features;
    Normalizer norm{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    const double count = static_cast<double>(rows.size());
    for (std::size_t i : rows) {
        const auto x = dataset.row(i);
        for (std::size_t k = 0; k < d; ++k) norm.mean[k] += x[k];
    }
    for (double& m : norm.mean) m /= count;
    for (std::size_t i : rows) {
        const auto x = dataset.row(i);
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = x[k] - norm.mean[k];
            norm.std[k] += diff * diff;
        }
    }
    for (double& s : norm.std) {
        s = std::sqrt(s / count);
        if (!(s > 0.0)) s = 1.0;
    }
    return norm;
}

void apply_normalizer(const Normalizer& normalizer, std::span<double> features, std::size_t n_features) {
    if (normalizer.mean.size() != n_features || normalizer.std.size() != n_features ||
        features.size() % n_features != 0) {
        throw Error(ErrorCode::dimension_mismatch, "normalizer does not match the feature matrix");
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
        const std::size_t k = i % n_features;
        features[i] = (features[i] - normalizer.mean[k]) / normalizer.std[k];
    }
}

std::vector<NeighborInfo> compute_neighbors(const Dataset& dataset) {
    const auto train_rows = dataset.rows_in(Split::train);
    if (train_rows.size() < 2) {
        throw Error(ErrorCode::invalid_argument, "nearest neighbors need at least two training points");
    }
    const std::size_t d = dataset.n_features;
    std::vector<NeighborInfo> out(dataset.n_rows);
    for (std::size_t i = 0; i < dataset.n_rows; ++i) {
        const auto xi = dataset.row(i);
        NeighborInfo best;
        best.nn_distance = std::numeric_limits<double>::infinity();
        for (std::size_t j : train_rows) {
            if (j == i) continue;
            const auto xj = dataset.row(j);
            double dist = 0.0;
            for (std::size_t k = 0; k < d && dist < best.nn_distance; ++k) {
                dist = std::max(dist, std::abs(xi[k] - xj[k]));
            }
            if (dist < best.nn_distance) {
                best.nn_distance = dist;
                best.nn_index = j;
            }
        }
        best.label_gap = std::abs(dataset.targets[i] - dataset.targets[best.nn_index]);
        out[i] = best;
    }
    return out;
}

Dataset prepare_dataset(const std::filesystem::path& path, const CsvOptions& options,
                        std::array<double, 3> fractions, std::uint64_t seed) {
    Dataset ds = split(load_csv(path, options), fractions, seed);
    ds.normalizer = fit_normalizer(ds);
    apply_normalizer(*ds.normalizer, ds.features, ds.n_features);
    ds.neighbors = compute_neighbors(ds);
    return ds;
}

nlohmann::json to_json(const Dataset& ds) {
    nlohmann::json j;
    j["name"] = ds.name;
    j["n_rows"] = ds.n_rows;
    j["n_features"] = ds.n_features;
    j["feature_names"] = ds.feature_names;
    j["target_name"] = ds.target_name;
    j["target_bounded_01"] = ds.target_bounded_01;
    j["features"] = ds.features;
    j["targets"] = ds.targets;
    std::vector<std::string> split_names;
    for (Split s : ds.split) split_names.push_back(to_string(s));
    j["split"] = split_names;
    if (ds.normalizer) {
        j["normalizer"] = {{"mean", ds.normalizer->mean}, {"std", ds.normalizer->std}};
    }
    nlohmann::json nbrs = nlohmann::json::array();
    for (const auto& n : ds.neighbors) {
        nbrs.push_back({{"nn_index", n.nn_index}, {"nn_distance", n.nn_distance}, {"label_gap", n.label_gap}});
    }
    j["neighbors"] = nbrs;
    return j;
}

Dataset dataset_from_json(const nlohmann::json& j) {
    Dataset ds;
    try {
        ds.name = j.at("name").get<std::string>();
        ds.n_rows = j.at("n_rows").get<std::size_t>();
        ds.n_features = j.at("n_features").get<std::size_t>();
        ds.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        ds.target_name = j.at("target_name").get<std::string>();
        ds.target_bounded_01 = j.at("target_bounded_01").get<bool>();
        ds.features = j.at("features").get<std::vector<double>>();
        ds.targets = j.at("targets").get<std::vector<double>>();
        for (const auto& s : j.at("split")) {
            const auto name = s.get<std::string>();
            if (name == "train") ds.split.push_back(Split::train);
            else if (name == "val") ds.split.push_back(Split::val);
            else if (name == "test") ds.split.push_back(Split::test);
            else throw Error(ErrorCode::parse_error, "unknown split label '" + name + "'");
        }
        if (j.contains("normalizer")) {
            ds.normalizer = Normalizer{j["normalizer"].at("mean").get<std::vector<double>>(),
                                       j["normalizer"].at("std").get<std::vector<double>>()};
        }
        for (const auto& n : j.at("neighbors")) {
            ds.neighbors.push_back({n.at("nn_index").get<std::size_t>(), n.at("nn_distance").get<double>(),
                                    n.at("label_gap").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("malformed dataset cache: ") + e.what());
    }
    if (ds.features.size() != ds.n_rows * ds.n_features || ds.targets.size() != ds.n_rows ||
        ds.split.size() != ds.n_rows || (!ds.neighbors.empty() && ds.neighbors.size() != ds.n_rows)) {
        throw Error(ErrorCode::parse_error, "dataset cache has inconsistent sizes");
    }
    return ds;
}

}  // namespace advreg
