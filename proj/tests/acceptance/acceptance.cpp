// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "advreg/experiment.hpp"
#include "support.hpp"

using namespace advreg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// ---- 1: gradients -------------------------------------------------------

Outcome gradient_suite() {
    std::mt19937_64 gen(101);
    std::uniform_int_distribution<std::size_t> dim(1, 4);
    double worst_first = 0.0, worst_penalty = 0.0, worst_stability = 0.0;
    std::size_t cases = 0, penalty_cases = 0, stability_cases = 0;
    while (cases < 1000) {
        const std::size_t in = dim(gen), hidden = dim(gen);
        const auto act = cases % 3 == 2 ? OutputActivation::sigmoid : OutputActivation::identity;
        const auto net = testsupport::random_net(gen, in, hidden, act);
        const auto x = testsupport::random_vector(gen, in);
        if (testsupport::min_abs_pre(net, x) < 1e-3) continue;
        const double y = std::uniform_real_distribution<double>(-2.0, 2.0)(gen);
        ++cases;

        // first order: parameters and input
        const auto g = backward(net, x, y);
        const auto sq = [&](const RegressionNet& n, std::span<const double> at) {
            const double a = y - testsupport::oracle_forward(n, at).out;
            return a * a;
        };
        const auto fd_theta = testsupport::fd_params(net, [&](const RegressionNet& n) { return sq(n, x); });
        std::vector<double> fd_x(in);
        for (std::size_t k = 0; k < in; ++k) {
            auto up = x, down = x;
            up[k] += 1e-5;
            down[k] -= 1e-5;
            fd_x[k] = (sq(net, up) - sq(net, down)) / 2e-5;
        }
        worst_first = std::max({worst_first, testsupport::rel_error(g.d_theta, fd_theta),
                                testsupport::rel_error(g.d_x, fd_x)});

        // gradient penalty, away from sign flips of d loss / dx
        const Loss loss = cases % 2 ? Loss::pseudo_huber(0.8) : Loss::squared();
        const auto gl = backward(net, x, y, loss);
        bool flip = std::abs(y - forward(net, x)) < 1e-3;
        for (double d : gl.d_x) flip = flip || std::abs(d) < 1e-4;
        if (!flip) {
            const double sigma = 0.9;
            const auto analytic = grad_penalty_param_grad(net, x, y, sigma, loss);
            const auto fd = testsupport::fd_params(net, [&](const RegressionNet& n) {
                return grad_penalty_value(n, x, y, sigma, loss);
            });
            worst_penalty = std::max(worst_penalty, testsupport::rel_error(analytic, fd));
            ++penalty_cases;
        }

        // stability penalty with frozen samples, away from kinks and the gate threshold
        DefenseConfig cfg;
        cfg.kind = DefenseKind::ansr;
        cfg.lambda = 1.3;
        cfg.beta = 1.5;
        cfg.n_samples = 16;
        const NeighborInfo nb{0, 0.4, cases % 2 ? 0.0 : 0.03};
        const Rng frozen(cases);
        Rng scan = frozen;
        const double r = cfg.beta * nb.nn_distance;
        const double fx = forward(net, x);
        bool clean = true;
        for (std::size_t s = 0; s < cfg.n_samples; ++s) {
            auto moved = x;
            for (double& v : moved) v += scan.uniform(-r, r);
            clean = clean && testsupport::min_abs_pre(net, moved) > 1e-3 &&
                    std::abs(std::abs(fx - forward(net, moved)) - nb.label_gap) > 1e-4;
        }
        if (clean) {
            Rng a = frozen;
            const auto analytic = ansr_param_grad(net, x, nb, cfg, a);
            const auto fd = testsupport::fd_params(net, [&](const RegressionNet& n) {
                Rng b = frozen;
                return cfg.lambda * ansr_penalty(n, x, nb, cfg, b);
            });
            worst_stability = std::max(worst_stability, testsupport::rel_error(analytic, fd));
            ++stability_cases;
        }
    }
    const bool pass = worst_first < 1e-4 && worst_penalty < 1e-3 && worst_stability < 1e-3 &&
                      penalty_cases >= 500 && stability_cases >= 500;
    return {pass, std::to_string(cases) + " nets; worst relative error backward " + fmt(worst_first) +
                      ", gradient penalty " + fmt(worst_penalty) + " (" + std::to_string(penalty_cases) +
                      " cases), stability " + fmt(worst_stability) + " (" + std::to_string(stability_cases) +
                      " cases)"};
}

// ---- 2: attacks ---------------------------------------------------------

Outcome attack_invariants() {
    std::mt19937_64 gen(202);
    std::uniform_int_distribution<std::size_t> dim(1, 5);
    std::uniform_real_distribution<double> mag(0.0, 0.5);
    std::size_t violations = 0, mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
        const std::size_t in = dim(gen);
        const auto net = testsupport::random_net(gen, in, dim(gen));
        const auto x = testsupport::random_vector(gen, in, 3.0);
        const double y = mag(gen) * 4.0 - 1.0;
        const double eps = mag(gen);
        const AttackConfig p{AttackKind::pgd, mag(gen), mag(gen), 1 + static_cast<std::size_t>(i % 15)};
        const auto f = fgsm(net, x, y, eps);
        const auto q = pgd(net, x, y, p);
        for (std::size_t k = 0; k < in; ++k) {
            if (f[k] < x[k] - eps || f[k] > x[k] + eps) ++violations;
            if (q[k] < x[k] - p.rho || q[k] > x[k] + p.rho) ++violations;
        }
        const AttackConfig one{AttackKind::pgd, eps, eps, 1};
        if (pgd(net, x, y, one) != f) ++mismatches;
    }
    return {violations == 0 && mismatches == 0,
            "10000 cases; ball violations " + std::to_string(violations) + ", PGD(Q=1, eps=rho) != FGSM in " +
                std::to_string(mismatches)};
}

// ---- 3: zero penalty ----------------------------------------------------

Outcome zero_penalty() {
    std::mt19937_64 gen(303);
    std::size_t nonzero_constant = 0, nonzero_gated = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t in = 1 + i % 5;
        DefenseConfig cfg;
        cfg.kind = DefenseKind::ansr;
        cfg.lambda = 5.0;
        cfg.beta = 8.0;
        cfg.n_samples = 20;
        const auto x = testsupport::random_vector(gen, in);

        auto flat = testsupport::random_net(gen, in, in);
        for (double& w : flat.w2()) w = 0.0;
        Rng r1(i);
        if (ansr_penalty(flat, x, NeighborInfo{0, 1.0, 0.0}, cfg, r1) != 0.0) ++nonzero_constant;

        // sigmoid outputs move by less than 1, so a unit label gap gates every sample
        const auto net = testsupport::random_net(gen, in, in, OutputActivation::sigmoid, 2.0);
        Rng r2(i);
        for (double g : ansr_param_grad(net, x, NeighborInfo{0, 1.0, 1.0}, cfg, r2)) {
            if (g != 0.0) {
                ++nonzero_gated;
                break;
            }
        }
    }
    return {nonzero_constant == 0 && nonzero_gated == 0,
            "1000 cases; nonzero penalty on constant nets " + std::to_string(nonzero_constant) +
                ", nonzero gradient with all samples gated " + std::to_string(nonzero_gated)};
}

// ---- 4: Monte-Carlo consistency ----------------------------------------

Outcome monte_carlo() {
    // f(x) = relu(x + 10) - 10 is the identity near the origin, so the penalty
    // averages dx^2 with dx uniform on [-r, r].
    RegressionNet net(1, 1);
    net.w1_at(0, 0) = 1.0;
    net.b1()[0] = 10.0;
    net.w2()[0] = 1.0;
    net.b2() = -10.0;
    const std::vector<double> x{0.0};
    const double r = 1.0;

    std::mt19937_64 gen(404);
    std::uniform_real_distribution<double> u(-r, r);
    double sum = 0.0, sum2 = 0.0;
    const int n_oracle = 1000000;
    for (int i = 0; i < n_oracle; ++i) {
        const double d = u(gen);
        sum += d * d;
        sum2 += d * d * d * d;
    }
    const double oracle = sum / n_oracle;
    const double var = sum2 / n_oracle - oracle * oracle;
    const double se = std::sqrt(var / 100.0);

    DefenseConfig cfg;
    cfg.kind = DefenseKind::ansr;
    cfg.beta = r;
    cfg.n_samples = 100;
    int covered = 0;
    for (int rep = 0; rep < 100; ++rep) {
        Rng rng(derive_seed(404, "repetition", rep));
        const double est = ansr_penalty(net, x, NeighborInfo{0, 1.0, 0.0}, cfg, rng);
        if (std::abs(est - oracle) <= 3.0 * se) ++covered;
    }
    return {covered >= 95, "oracle " + fmt(oracle) + " (r^2/3 = " + fmt(r * r / 3.0) + "), standard error " + fmt(se) +
                               "; " + std::to_string(covered) + "/100 estimates within 3 SE"};
}

// ---- Boston runs --------------------------------------------------------

struct Table {
    std::map<std::string, std::map<std::string, std::vector<double>>> mse;  // defense -> attack -> per seed
    std::map<std::string, std::map<std::size_t, std::vector<double>>> pgd_errors;  // defense -> seed -> |f_adv - y|

    double mean(const std::string& d, const std::string& a) const {
        const auto& v = mse.at(d).at(a);
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    }
};

Table load_table(const fs::path& out) {
    Table t;
    std::ifstream cells(OutputPaths(out).cells_csv);
    for (const auto& c : read_cells_csv(cells)) {
        auto& v = t.mse[c.defense][c.attack];
        if (v.size() <= c.seed) v.resize(c.seed + 1);
        v[c.seed] = c.test_mse;
    }
    std::ifstream points(OutputPaths(out).points_csv);
    std::string line;
    std::getline(points, line);
    while (std::getline(points, line)) {
        std::stringstream ss(line);
        std::vector<std::string> f;
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        t.pgd_errors[f[0]][std::stoul(f[1])].push_back(std::stod(f[6]));
    }
    return t;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void run_pipeline(const ExperimentConfig& cfg) {
    run_prepare(cfg);
    run_tune(cfg);
    run_evaluate(cfg);
}

Outcome determinism(const fs::path& work, ExperimentConfig cfg) {
    cfg.search.n_trials = 3;
    cfg.search.n_samples = 10;
    cfg.defense_params.n_samples = 10;
    cfg.train.epochs = 8;
    cfg.n_seeds = 3;
    std::vector<std::string> files{"cells.csv", "points.csv", "summary.json", "dataset.json"};
    for (auto d : cfg.defenses) {
        if (d != DefenseKind::none) files.push_back("tune/" + to_string(d) + ".trials.jsonl");
    }
    std::map<std::size_t, std::map<std::string, std::string>> outputs;
    for (std::size_t jobs : {1, 4}) {
        cfg.jobs = jobs;
        cfg.output_dir = work / ("determinism_jobs" + std::to_string(jobs));
        fs::remove_all(cfg.output_dir);
        run_pipeline(cfg);
        for (const auto& f : files) outputs[jobs][f] = slurp(cfg.output_dir / f);
    }
    // a second single-threaded run into a fresh directory
    cfg.jobs = 1;
    cfg.output_dir = work / "determinism_repeat";
    fs::remove_all(cfg.output_dir);
    run_pipeline(cfg);
    std::string differing;
    for (const auto& f : files) {
        const std::string repeat = slurp(cfg.output_dir / f);
        if (outputs[1][f] != outputs[4][f] || outputs[1][f] != repeat || repeat.empty()) differing += " " + f;
    }
    return {differing.empty(), differing.empty() ? std::to_string(files.size()) +
                                                       " output files byte-identical across two runs and jobs = 1 / 4"
                                                 : "differing files:" + differing};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::string work_dir = (fs::temp_directory_path() / "advreg_acceptance").string();
    std::string config = ADVREG_DEFAULT_CONFIG;
    bool reuse = false;
    app.add_option("--work-dir", work_dir, "scratch directory for pipeline runs");
    app.add_option("--config", config, "experiment config for the Boston runs");
    app.add_flag("--reuse", reuse, "reuse an existing full Boston run in the work directory");
    CLI11_PARSE(app, argc, argv);
    const fs::path work(work_dir);
    fs::create_directories(work);

    report(1, "gradient correctness", gradient_suite());
    report(2, "attack invariants", attack_invariants());
    report(3, "zero stability penalty", zero_penalty());
    report(4, "Monte-Carlo consistency", monte_carlo());

    ExperimentConfig cfg = load_config(config);
    cfg.output_dir = work / "boston";
    const bool have_run = fs::exists(OutputPaths(cfg.output_dir).summary_json);
    if (!(reuse && have_run)) {
        fs::remove_all(cfg.output_dir);
        run_pipeline(cfg);
    }
    const Table t = load_table(cfg.output_dir);
    const std::size_t n_seeds = cfg.n_seeds;

    {
        const double clean = t.mean("none", "none"), pgd = t.mean("none", "pgd");
        const double ansr = t.mean("ansr", "pgd"), ph = t.mean("pseudo_huber", "pgd"), gr = t.mean("grad_reg", "pgd");
        const bool a = pgd >= 2.0 * clean;
        const bool b = ansr <= 0.75 * pgd;
        const bool c = ansr <= ph && ansr <= gr;
        report(5, "Boston reproduction",
               {a && b && c, std::string("(a) ") + (a ? "ok" : "no") + " no-defense PGD " + format_sci3(pgd) +
                                 " vs clean " + format_sci3(clean) + " (x" + fmt(pgd / clean) + "); (b) " +
                                 (b ? "ok" : "no") + " ANSR PGD " + format_sci3(ansr) + " vs 0.75 x " +
                                 format_sci3(pgd) + "; (c) " + (c ? "ok" : "no") + " ANSR " + format_sci3(ansr) +
                                 " vs pseudo-Huber " + format_sci3(ph) + ", gradient regularization " +
                                 format_sci3(gr)});
    }
    {
        bool pass = true;
        std::string detail;
        for (const auto& [defense, by_attack] : t.mse) {
            const double fgsm = t.mean(defense, "fgsm"), pgd = t.mean(defense, "pgd");
            const double gap = std::abs(pgd - fgsm) / pgd;
            std::size_t ordered = 0;
            for (std::size_t s = 0; s < n_seeds; ++s) ordered += by_attack.at("pgd")[s] >= by_attack.at("fgsm")[s];
            const bool ok = gap < 0.15 && ordered * 3 >= n_seeds * 2;
            pass = pass && ok;
            detail += (detail.empty() ? "" : "; ") + defense + " gap " + fmt(gap) + ", PGD >= FGSM in " +
                      std::to_string(ordered) + "/" + std::to_string(n_seeds);
        }
        report(6, "FGSM/PGD relationship", {pass, detail});
    }
    {
        std::size_t median_wins = 0, max_wins = 0, both = 0;
        for (std::size_t s = 0; s < n_seeds; ++s) {
            const auto& base = t.pgd_errors.at("none").at(s);
            const auto& ansr = t.pgd_errors.at("ansr").at(s);
            const bool m = median(ansr) < median(base);
            const bool x = *std::max_element(ansr.begin(), ansr.end()) < *std::max_element(base.begin(), base.end());
            median_wins += m;
            max_wins += x;
            both += m && x;
        }
        report(7, "PGD error distribution shift",
               {both * 2 > n_seeds, "ANSR median smaller in " + std::to_string(median_wins) + "/" +
                                        std::to_string(n_seeds) + " seeds, maximum smaller in " +
                                        std::to_string(max_wins) + ", both in " + std::to_string(both)});
    }
    report(8, "determinism", determinism(work, cfg));
    {
        const double combined = t.mean("combined", "pgd");
        double best = INFINITY;
        std::string best_name;
        for (const std::string d : {"pseudo_huber", "grad_reg", "ansr"}) {
            if (t.mean(d, "pgd") < best) {
                best = t.mean(d, "pgd");
                best_name = d;
            }
        }
        report(9, "combined defense",
               {combined <= 1.5 * best, "combined PGD " + format_sci3(combined) + " vs best individual (" +
                                            best_name + ") " + format_sci3(best) + " (x" + fmt(combined / best) + ")"});
    }
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
