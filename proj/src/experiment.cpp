#include "advreg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

#include "advreg/error.hpp"
#include "advreg/rng.hpp"

namespace advreg {

namespace fs = std::filesystem;

namespace {

// Collects "field: problem" messages so a bad config reports every problem at once.
class FieldErrors {
public:
    void check(const std::string& field, const std::function<void()>& fn) {
        try {
            fn();
        } catch (const Error& e) {
            messages_.push_back(field + ": " + e.what());
        } catch (const nlohmann::json::exception& e) {
            messages_.push_back(field + ": " + e.what());
        }
    }

    void add(const std::string& field, const std::string& message) { messages_.push_back(field + ": " + message); }

    void throw_if_any() const {
        if (messages_.empty()) return;
        std::string all = "invalid configuration";
        for (const auto& m : messages_) all += "\n  " + m;
        throw Error(ErrorCode::config_error, all);
    }

private:
    std::vector<std::string> messages_;
};

Interval interval_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 2) throw Error(ErrorCode::config_error, "expected [lower, upper]");
    if (!(v[0] < v[1])) throw Error(ErrorCode::config_error, "lower bound must be below the upper bound");
    return {v[0], v[1]};
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error(ErrorCode::io_error, "failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json provenance(const ExperimentConfig& cfg) {
    return {
        {"path", cfg.dataset.path.string()},
        {"target_column", cfg.dataset.target_column},
        {"name", cfg.dataset.name},
        {"bounded_target", cfg.dataset.bounded_target},
        {"drop_missing_columns", cfg.dataset.drop_missing_columns},
        {"split_fractions", cfg.split_fractions},
        {"seed", cfg.seed},
    };
}

void write_report_files(const OutputPaths& paths, const EvalReport& report) {
    std::ostringstream cells;
    write_cells_csv(cells, report.cells);
    write_text(paths.cells_csv, cells.str());
    std::ostringstream points;
    write_points_csv(points, report.points);
    write_text(paths.points_csv, points.str());
    const auto aggregates = aggregate(report.cells);
    write_text(paths.summary_json, summary_json(aggregates, report.points, report.flags).dump(2) + "\n");
}

void collect_errors(const ExperimentConfig& cfg, FieldErrors& errors) {
    if (cfg.dataset.path.empty()) errors.add("dataset.path", "required");
    if (cfg.dataset.target_column.empty()) errors.add("dataset.target_column", "required");
    errors.check("split.fractions", [&] {
        double total = 0.0;
        for (double f : cfg.split_fractions) {
            if (!(f > 0.0)) throw Error(ErrorCode::config_error, "every fraction must be positive");
            total += f;
        }
        if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::config_error, "fractions must sum to 1");
    });
    if (cfg.defenses.empty()) errors.add("defenses", "at least one defense is required");
    errors.check("defense_params", [&] {
        DefenseConfig all = cfg.defense_params;
        all.kind = DefenseKind::combined;
        all.validate();
    });
    errors.check("search", [&] { cfg.search.validate(); });
    if (cfg.attacks.empty()) errors.add("attacks", "at least one attack is required");
    for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
        errors.check("attacks[" + std::to_string(i) + "]", [&] { cfg.attacks[i].validate(); });
    }
    errors.check("train", [&] { cfg.train.validate(); });
    if (cfg.n_seeds < 1) errors.add("n_seeds", "must be at least 1");
    if (cfg.output_dir.empty()) errors.add("output_dir", "required");
}

}  // namespace

void ExperimentConfig::validate() const {
    FieldErrors errors;
    collect_errors(*this, errors);
    errors.throw_if_any();
}

ExperimentConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
    ExperimentConfig cfg;
    FieldErrors errors;
    const auto resolve = [&](const fs::path& p) { return p.is_relative() && !base_dir.empty() ? base_dir / p : p; };

    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        errors.check("dataset.path", [&] { cfg.dataset.path = resolve(d.at("path").get<std::string>()); });
        errors.check("dataset.target_column", [&] { cfg.dataset.target_column = d.at("target_column").get<std::string>(); });
        errors.check("dataset.name", [&] { cfg.dataset.name = d.value("name", std::string{}); });
        errors.check("dataset.bounded_target", [&] { cfg.dataset.bounded_target = d.value("bounded_target", false); });
        errors.check("dataset.drop_missing_columns",
                     [&] { cfg.dataset.drop_missing_columns = d.value("drop_missing_columns", false); });
    } else {
        errors.add("dataset", "required");
    }
    if (j.contains("split")) {
        errors.check("split.fractions", [&] {
            const auto f = j["split"].at("fractions").get<std::vector<double>>();
            if (f.size() != 3) throw Error(ErrorCode::config_error, "expected [train, val, test]");
            cfg.split_fractions = {f[0], f[1], f[2]};
        });
    }
    errors.check("seed", [&] { cfg.seed = j.value("seed", cfg.seed); });
    if (j.contains("defenses")) {
        errors.check("defenses", [&] {
            cfg.defenses.clear();
            for (const auto& d : j["defenses"]) cfg.defenses.push_back(defense_kind_from_string(d.get<std::string>()));
        });
    }
    if (j.contains("defense_params")) {
        errors.check("defense_params", [&] {
            nlohmann::json p = j["defense_params"];
            p["kind"] = "combined";
            cfg.defense_params = defense_from_json(p);
            cfg.defense_params.kind = DefenseKind::none;
        });
    }
    if (j.contains("search")) {
        const auto& s = j["search"];
        errors.check("search.n_trials", [&] { cfg.search.n_trials = s.value("n_trials", cfg.search.n_trials); });
        errors.check("search.n_samples", [&] { cfg.search.n_samples = s.value("n_samples", cfg.search.n_samples); });
        errors.check("search.objective", [&] {
            cfg.objective = search_objective_from_string(s.value("objective", to_string(cfg.objective)));
        });
        for (auto [key, slot] : {std::pair{"delta", &cfg.search.delta}, std::pair{"sigma", &cfg.search.sigma},
                                 std::pair{"beta", &cfg.search.beta}, std::pair{"lambda", &cfg.search.lambda}}) {
            if (s.contains(key)) {
                errors.check(std::string("search.") + key, [&] { *slot = interval_from_json(s[key]); });
            }
        }
    }
    if (j.contains("attacks")) {
        errors.check("attacks", [&] {
            cfg.attacks.clear();
            for (const auto& a : j["attacks"]) cfg.attacks.push_back(attack_from_json(a));
        });
    }
    if (j.contains("train")) {
        errors.check("train", [&] { cfg.train = train_config_from_json(j["train"], cfg.train); });
    }
    errors.check("n_seeds", [&] { cfg.n_seeds = j.value("n_seeds", cfg.n_seeds); });
    errors.check("jobs", [&] { cfg.jobs = j.value("jobs", cfg.jobs); });
    errors.check("output_dir", [&] {
        cfg.output_dir = resolve(j.value("output_dir", cfg.output_dir.string()));
    });
    if (!j.contains("defense_params") || !j["defense_params"].contains("n_samples")) {
        cfg.defense_params.n_samples = cfg.search.n_samples;
    }
    collect_errors(cfg, errors);
    errors.throw_if_any();
    return cfg;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
    nlohmann::json defenses = nlohmann::json::array();
    for (auto d : cfg.defenses) defenses.push_back(to_string(d));
    nlohmann::json attacks = nlohmann::json::array();
    for (const auto& a : cfg.attacks) attacks.push_back(to_json(a));
    nlohmann::json params = to_json(cfg.defense_params);
    params.erase("kind");
    const auto iv = [](const Interval& i) { return std::vector<double>{i.lo, i.hi}; };
    return {
        {"dataset",
         {{"path", cfg.dataset.path.string()},
          {"target_column", cfg.dataset.target_column},
          {"name", cfg.dataset.name},
          {"bounded_target", cfg.dataset.bounded_target},
          {"drop_missing_columns", cfg.dataset.drop_missing_columns}}},
        {"split", {{"fractions", cfg.split_fractions}}},
        {"seed", cfg.seed},
        {"defenses", defenses},
        {"defense_params", params},
        {"search",
         {{"n_trials", cfg.search.n_trials},
          {"n_samples", cfg.search.n_samples},
          {"objective", to_string(cfg.objective)},
          {"delta", iv(cfg.search.delta)},
          {"sigma", iv(cfg.search.sigma)},
          {"beta", iv(cfg.search.beta)},
          {"lambda", iv(cfg.search.lambda)}}},
        {"attacks", attacks},
        {"train", to_json(cfg.train)},
        {"n_seeds", cfg.n_seeds},
        {"jobs", cfg.jobs},
        {"output_dir", cfg.output_dir.string()},
    };
}

ExperimentConfig load_config(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(path), nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::config_error, "config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

OutputPaths::OutputPaths(const fs::path& out_dir)
    : dataset_cache(out_dir / "dataset.json"),
      tune_dir(out_dir / "tune"),
      cells_csv(out_dir / "cells.csv"),
      points_csv(out_dir / "points.csv"),
      summary_json(out_dir / "summary.json") {}

fs::path OutputPaths::best_config(DefenseKind kind) const { return tune_dir / (to_string(kind) + ".best.json"); }

fs::path OutputPaths::trial_log(DefenseKind kind) const { return tune_dir / (to_string(kind) + ".trials.jsonl"); }

Dataset run_prepare(const ExperimentConfig& cfg) {
    cfg.validate();
    CsvOptions opts;
    opts.name = cfg.dataset.name;
    opts.target_column = cfg.dataset.target_column;
    opts.target_bounded_01 = cfg.dataset.bounded_target;
    opts.drop_missing_columns = cfg.dataset.drop_missing_columns;
    Dataset ds = prepare_dataset(cfg.dataset.path, opts, cfg.split_fractions, derive_seed(cfg.seed, "split"));

    nlohmann::json cache = to_json(ds);
    cache["provenance"] = provenance(cfg);
    write_text(OutputPaths(cfg.output_dir).dataset_cache, cache.dump() + "\n");
    return ds;
}

Dataset load_or_prepare(const ExperimentConfig& cfg) {
    const OutputPaths paths(cfg.output_dir);
    if (fs::exists(paths.dataset_cache)) {
        const auto cache = nlohmann::json::parse(read_text(paths.dataset_cache), nullptr, false);
        if (!cache.is_discarded() && cache.contains("provenance") && cache["provenance"] == provenance(cfg)) {
            return dataset_from_json(cache);
        }
    }
    return run_prepare(cfg);
}

std::map<DefenseKind, SearchResult> run_tune(const ExperimentConfig& cfg) {
    cfg.validate();
    const Dataset ds = load_or_prepare(cfg);
    const OutputPaths paths(cfg.output_dir);
    std::map<DefenseKind, SearchResult> results;
    for (DefenseKind kind : cfg.defenses) {
        if (kind == DefenseKind::none) continue;
        SearchResult r;
        try {
            r = random_search(ds, kind, cfg.search, cfg.objective, cfg.train, derive_seed(cfg.seed, "tune"),
                              cfg.jobs);
        } catch (const Error& e) {
            throw Error(e.code(), "tuning " + to_string(kind) + ": " + e.what());
        }
        std::string log;
        for (const auto& t : r.trials) log += to_json(t).dump() + "\n";
        write_text(paths.trial_log(kind), log);
        nlohmann::json best = to_json(r.best);
        write_text(paths.best_config(kind), best.dump(2) + "\n");
        results.emplace(kind, std::move(r));
    }
    return results;
}

DefenseConfig resolve_defense(const ExperimentConfig& cfg, DefenseKind kind) {
    const fs::path best = OutputPaths(cfg.output_dir).best_config(kind);
    if (kind != DefenseKind::none && fs::exists(best)) {
        try {
            return defense_from_json(nlohmann::json::parse(read_text(best)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse_error, "malformed tuned config '" + best.string() + "': " + e.what());
        }
    }
    DefenseConfig d = cfg.defense_params;
    d.kind = kind;
    return d;
}

EvalReport run_evaluate(const ExperimentConfig& cfg) {
    cfg.validate();
    const Dataset ds = load_or_prepare(cfg);
    const OutputPaths paths(cfg.output_dir);
    EvalReport report;
    for (DefenseKind kind : cfg.defenses) {
        const DefenseConfig defense = resolve_defense(cfg, kind);
        report.append(evaluate_defense(ds, defense, cfg.attacks, cfg.n_seeds, cfg.train,
                                       derive_seed(cfg.seed, "evaluate"), cfg.jobs));
        write_report_files(paths, report);
    }
    report.flags = monotonicity_flags(aggregate(report.cells));
    write_report_files(paths, report);
    return report;
}

std::string run_report(const ExperimentConfig& cfg) {
    const OutputPaths paths(cfg.output_dir);
    std::istringstream in(read_text(paths.cells_csv));
    const auto aggregates = aggregate(read_cells_csv(in));

    std::vector<std::string> attacks;
    std::vector<std::pair<std::string, std::string>> rows;
    for (const auto& a : aggregates) {
        if (std::find(attacks.begin(), attacks.end(), a.attack) == attacks.end()) attacks.push_back(a.attack);
        const std::pair key{a.dataset, a.defense};
        if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
    }
    std::ostringstream out;
    out << std::left << std::setw(12) << "dataset" << std::setw(14) << "defense";
    for (const auto& a : attacks) out << std::setw(22) << a;
    out << "\n";
    for (const auto& [dataset, defense] : rows) {
        out << std::setw(12) << dataset << std::setw(14) << defense;
        for (const auto& attack : attacks) {
            std::string cell = "-";
            for (const auto& a : aggregates) {
                if (a.dataset == dataset && a.defense == defense && a.attack == attack) {
                    cell = format_sci3(a.mean) + " (" + (a.std ? format_sci3(*a.std) : std::string("n/a")) + ")";
                }
            }
            out << std::setw(22) << cell;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace advreg
