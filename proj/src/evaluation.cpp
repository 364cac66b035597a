#include "advreg/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "advreg/error.hpp"
#include "advreg/parallel.hpp"
#include "advreg/rng.hpp"

namespace advreg {

namespace {

std::string exact(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double sample_std(const std::vector<double>& v, double mean) {
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

Histogram make_histogram(const std::vector<double>& values, std::size_t bins) {
    if (bins == 0) {
        throw Error(ErrorCode::invalid_argument, "histogram needs at least one bin");
    }
    Histogram h;
    h.counts.assign(bins, 0);
    if (values.empty()) return h;
    h.hi = *std::max_element(values.begin(), values.end());
    for (double v : values) {
        std::size_t b = 0;
        if (h.hi > 0.0) {
            b = static_cast<std::size_t>(v / h.hi * static_cast<double>(bins));
            b = std::min(b, bins - 1);
        }
        ++h.counts[b];
    }
    return h;
}

PerturbationProfile perturbation_profile(const RegressionNet& net, const Dataset& dataset,
                                         const AttackConfig& attack_cfg, const std::string& defense_label,
                                         std::size_t seed) {
    PerturbationProfile profile;
    std::vector<double> errors;
    for (std::size_t i : dataset.rows_in(Split::test)) {
        const auto x = dataset.row(i);
        const double y = dataset.targets[i];
        const auto adv = attack(net, x, y, attack_cfg);
        PointRecord p;
        p.defense = defense_label;
        p.seed = seed;
        p.index = i;
        p.y = y;
        p.f_clean = forward(net, x);
        p.f_adv = forward(net, adv);
        p.error_adv = std::abs(p.f_adv - y);
        p.shift = std::abs(p.f_adv - p.f_clean);
        p.nn_distance = dataset.neighbors.size() == dataset.n_rows ? dataset.neighbors[i].nn_distance
                                                                    : std::numeric_limits<double>::quiet_NaN();
        errors.push_back(p.error_adv);
        profile.points.push_back(p);
    }
    profile.error_histogram = make_histogram(errors);
    return profile;
}

void EvalReport::append(const EvalReport& other) {
    cells.insert(cells.end(), other.cells.begin(), other.cells.end());
    points.insert(points.end(), other.points.begin(), other.points.end());
    flags.insert(flags.end(), other.flags.begin(), other.flags.end());
}

EvalReport evaluate_defense(const Dataset& dataset, const DefenseConfig& defense,
                            const std::vector<AttackConfig>& attacks, std::size_t n_seeds,
                            const TrainConfig& train_cfg, std::uint64_t master_seed, std::size_t jobs) {
    if (n_seeds < 1) {
        throw Error(ErrorCode::invalid_argument, "evaluation needs at least one seed");
    }
    for (const auto& a : attacks) a.validate();
    const std::string label = to_string(defense.kind);
    const auto test_rows = dataset.rows_in(Split::test);
    const auto pgd_it = std::find_if(attacks.begin(), attacks.end(),
                                     [](const AttackConfig& a) { return a.kind == AttackKind::pgd; });

    std::vector<EvalReport> per_seed(n_seeds);
    parallel_for(n_seeds, jobs, [&](std::size_t s) {
        TrainConfig cfg = train_cfg;
        cfg.seed = derive_seed(master_seed, "evaluate/" + label, s);
        TrainResult trained;
        try {
            trained = train(dataset, defense, cfg);
        } catch (const Error& e) {
            throw Error(e.code(), "defense " + label + ", seed " + std::to_string(s) + ": " + e.what());
        }
        EvalReport& rep = per_seed[s];
        for (const auto& a : attacks) {
            rep.cells.push_back({dataset.name, label, to_string(a.kind), s,
                                 attacked_mse(trained.net, dataset, test_rows, a)});
        }
        if (pgd_it != attacks.end()) {
            rep.points = perturbation_profile(trained.net, dataset, *pgd_it, label, s).points;
        }
    });

    EvalReport report;
    for (const auto& r : per_seed) report.append(r);
    // Seed-major order within a defense: regroup as attack-major for readability.
    std::stable_sort(report.cells.begin(), report.cells.end(), [&](const CellRecord& a, const CellRecord& b) {
        const auto rank = [&](const std::string& name) {
            for (std::size_t i = 0; i < attacks.size(); ++i) {
                if (to_string(attacks[i].kind) == name) return i;
            }
            return attacks.size();
        };
        return rank(a.attack) < rank(b.attack);
    });
    report.flags = monotonicity_flags(aggregate(report.cells));
    return report;
}

EvalReport evaluate_cell(const Dataset& dataset, const DefenseConfig& defense, const AttackConfig& attack_cfg,
                         std::size_t n_seeds, const TrainConfig& train_cfg, std::uint64_t master_seed,
                         std::size_t jobs) {
    return evaluate_defense(dataset, defense, {attack_cfg}, n_seeds, train_cfg, master_seed, jobs);
}

std::vector<CellAggregate> aggregate(const std::vector<CellRecord>& cells) {
    std::vector<CellAggregate> out;
    std::vector<std::vector<double>> values;
    for (const auto& c : cells) {
        auto it = std::find_if(out.begin(), out.end(), [&](const CellAggregate& a) {
            return a.dataset == c.dataset && a.defense == c.defense && a.attack == c.attack;
        });
        if (it == out.end()) {
            out.push_back({c.dataset, c.defense, c.attack, 0, 0.0, std::nullopt});
            values.emplace_back();
            it = out.end() - 1;
        }
        values[static_cast<std::size_t>(it - out.begin())].push_back(c.test_mse);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& v = values[i];
        double sum = 0.0;
        for (double x : v) sum += x;
        out[i].n_seeds = v.size();
        out[i].mean = sum / static_cast<double>(v.size());
        if (v.size() > 1) out[i].std = sample_std(v, out[i].mean);
    }
    return out;
}

std::vector<std::string> monotonicity_flags(const std::vector<CellAggregate>& aggregates) {
    std::vector<std::string> flags;
    for (const auto& a : aggregates) {
        if (a.attack == "none") continue;
        for (const auto& clean : aggregates) {
            if (clean.attack == "none" && clean.dataset == a.dataset && clean.defense == a.defense &&
                a.mean < clean.mean) {
                flags.push_back(a.dataset + "/" + a.defense + ": " + a.attack +
                                " mean MSE below clean MSE (" + format_sci3(a.mean) + " < " +
                                format_sci3(clean.mean) + ")");
            }
        }
    }
    return flags;
}

std::string format_sci3(double value) {
    if (!std::isfinite(value)) return std::isnan(value) ? "NaN" : (value > 0 ? "Inf" : "-Inf");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2E", value);
    return buf;
}

void write_cells_csv(std::ostream& out, const std::vector<CellRecord>& cells) {
    out << "dataset,defense,attack,seed,test_mse\n";
    for (const auto& c : cells) {
        out << c.dataset << ',' << c.defense << ',' << c.attack << ',' << c.seed << ',' << exact(c.test_mse) << '\n';
    }
}

std::vector<CellRecord> read_cells_csv(std::istream& in) {
    std::vector<CellRecord> cells;
    std::string line;
    if (!std::getline(in, line) || line.rfind("dataset,defense,attack,seed,test_mse", 0) != 0) {
        throw Error(ErrorCode::parse_error, "cells CSV is missing its header");
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        CellRecord c;
        bool ok = f.size() == 5;
        if (ok) {
            c.dataset = f[0];
            c.defense = f[1];
            c.attack = f[2];
            const auto r1 = std::from_chars(f[3].data(), f[3].data() + f[3].size(), c.seed);
            const auto r2 = std::from_chars(f[4].data(), f[4].data() + f[4].size(), c.test_mse);
            ok = r1.ec == std::errc() && r2.ec == std::errc();
        }
        if (!ok) {
            throw Error(ErrorCode::parse_error, "malformed cells CSV line " + std::to_string(line_no));
        }
        cells.push_back(c);
    }
    return cells;
}

void write_points_csv(std::ostream& out, const std::vector<PointRecord>& points) {
    out << "defense,seed,index,y,f_clean,f_adv,abs_error_adv,abs_shift,nn_distance\n";
    for (const auto& p : points) {
        out << p.defense << ',' << p.seed << ',' << p.index << ',' << exact(p.y) << ',' << exact(p.f_clean) << ','
            << exact(p.f_adv) << ',' << exact(p.error_adv) << ',' << exact(p.shift) << ','
            << exact(p.nn_distance) << '\n';
    }
}

nlohmann::json summary_json(const std::vector<CellAggregate>& aggregates,
                            const std::vector<PointRecord>& points,
                            const std::vector<std::string>& flags) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& a : aggregates) {
        nlohmann::json c = {
            {"dataset", a.dataset},
            {"defense", a.defense},
            {"attack", a.attack},
            {"n_seeds", a.n_seeds},
            {"mean", format_sci3(a.mean)},
        };
        c["std"] = a.std ? nlohmann::json(format_sci3(*a.std)) : nlohmann::json(nullptr);
        cells.push_back(c);
    }

    std::map<std::string, std::vector<double>> by_defense;
    std::vector<std::string> order;
    for (const auto& p : points) {
        if (!by_defense.count(p.defense)) order.push_back(p.defense);
        by_defense[p.defense].push_back(p.error_adv);
    }
    nlohmann::json histograms = nlohmann::json::object();
    for (const auto& d : order) {
        const Histogram h = make_histogram(by_defense[d]);
        histograms[d] = {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}};
    }
    return {{"cells", cells}, {"pgd_error_histograms", histograms}, {"flags", flags}};
}

}  // namespace advreg
