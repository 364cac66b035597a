#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "advreg/error.hpp"
#include "advreg/experiment.hpp"
#include "json.hpp"

namespace {

struct Overrides {
    std::string config_path = ADVREG_DEFAULT_CONFIG;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::vector<std::string> defenses;
    std::vector<std::string> attacks;
};

advreg::ExperimentConfig resolve_config(const Overrides& o) {
    using namespace advreg;
    ExperimentConfig cfg = load_config(o.config_path);
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (o.seed) cfg.seed = *o.seed;
    if (o.jobs) cfg.jobs = *o.jobs;
    if (!o.defenses.empty()) {
        cfg.defenses.clear();
        for (const auto& d : o.defenses) cfg.defenses.push_back(defense_kind_from_string(d));
    }
    if (!o.attacks.empty()) {
        std::vector<AttackConfig> selected;
        for (const auto& name : o.attacks) {
            const AttackKind kind = attack_kind_from_string(name);
            AttackConfig a = kind == AttackKind::pgd    ? AttackConfig::pgd_default()
                             : kind == AttackKind::fgsm ? AttackConfig::fgsm_default()
                                                        : AttackConfig::clean();
            for (const auto& configured : cfg.attacks) {
                if (configured.kind == kind) a = configured;
            }
            selected.push_back(a);
        }
        cfg.attacks = selected;
    }
    for (const auto& a : cfg.attacks) {
        if (a.oversized_step()) {
            std::cerr << "warning: PGD step " << a.epsilon << " exceeds the ball diameter " << 2 * a.rho << "\n";
        }
    }
    cfg.validate();
    return cfg;
}

int fail(const std::string& code, const std::string& message) {
    nlohmann::json err = {{"error", {{"code", code}, {"message", message}}}};
    std::cerr << err.dump() << std::endl;
    return EXIT_FAILURE;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial regression experiments: prepare data, tune defenses, evaluate under attack"};
    app.require_subcommand(1);

    Overrides o;
    const auto add_common = [&o](CLI::App* sub) {
        sub->add_option("-c,--config", o.config_path, "experiment config (JSON)")->capture_default_str();
        sub->add_option("-o,--out", o.out, "output directory (overrides the config)");
        sub->add_option("--seed", o.seed, "master seed (overrides the config)");
        sub->add_option("-j,--jobs", o.jobs, "worker threads, 0 = all cores");
        sub->add_option("--defense", o.defenses, "restrict to these defenses (none, pseudo_huber, grad_reg, ansr, combined)");
        sub->add_option("--attack", o.attacks, "restrict to these attacks (none, fgsm, pgd)");
    };

    auto* prepare = app.add_subcommand("prepare", "load, split, normalize and precompute nearest neighbors");
    auto* tune = app.add_subcommand("tune", "random hyperparameter search for each defense");
    auto* evaluate = app.add_subcommand("evaluate", "multi-seed test MSE under each attack");
    auto* report = app.add_subcommand("report", "print the mean (std) table from evaluate's output");
    for (auto* sub : {prepare, tune, evaluate, report}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const advreg::ExperimentConfig cfg = resolve_config(o);
        if (prepare->parsed()) {
            const auto ds = advreg::run_prepare(cfg);
            nlohmann::json info = {{"dataset", ds.name},
                                   {"n_rows", ds.n_rows},
                                   {"n_features", ds.n_features},
                                   {"train", ds.count(advreg::Split::train)},
                                   {"val", ds.count(advreg::Split::val)},
                                   {"test", ds.count(advreg::Split::test)},
                                   {"cache", advreg::OutputPaths(cfg.output_dir).dataset_cache.string()}};
            std::cout << info.dump() << std::endl;
        } else if (tune->parsed()) {
            for (const auto& [kind, result] : advreg::run_tune(cfg)) {
                nlohmann::json line = {{"defense", advreg::to_string(kind)},
                                       {"best_trial", result.best_trial},
                                       {"objective", result.trials[result.best_trial].objective},
                                       {"config", advreg::to_json(result.best)}};
                std::cout << line.dump() << std::endl;
            }
        } else if (evaluate->parsed()) {
            const auto rep = advreg::run_evaluate(cfg);
            std::cout << advreg::run_report(cfg);
            for (const auto& f : rep.flags) std::cerr << "flag: " << f << "\n";
        } else if (report->parsed()) {
            std::cout << advreg::run_report(cfg);
        }
    } catch (const advreg::Error& e) {
        return fail(std::string(advreg::to_string(e.code())), e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return EXIT_SUCCESS;
}
