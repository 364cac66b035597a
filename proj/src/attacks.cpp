#include "advreg/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "advreg/error.hpp"

namespace advreg {

namespace {

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_attack_inputs(const RegressionNet& net, std::span<const double> x, double y) {
    check_input(net, x);
    if (!std::isfinite(y)) {
        throw Error(ErrorCode::non_finite, "attack target is not finite");
    }
}

}  // namespace

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::none: return "none";
        case AttackKind::fgsm: return "fgsm";
        case AttackKind::pgd: return "pgd";
    }
    return "none";
}

AttackKind attack_kind_from_string(const std::string& name) {
    if (name == "none") return AttackKind::none;
    if (name == "fgsm") return AttackKind::fgsm;
    if (name == "pgd") return AttackKind::pgd;
    throw Error(ErrorCode::invalid_argument, "unknown attack '" + name + "'");
}

void AttackConfig::validate() const {
    if (kind == AttackKind::none) return;
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw Error(ErrorCode::invalid_argument, "attack epsilon must be positive and finite");
    }
    if (kind == AttackKind::pgd) {
        if (!(rho > 0.0) || !std::isfinite(rho)) {
            throw Error(ErrorCode::invalid_argument, "PGD rho must be positive and finite");
        }
        if (steps < 1) {
            throw Error(ErrorCode::invalid_argument, "PGD needs at least one step");
        }
    }
}

double AttackConfig::radius() const {
    switch (kind) {
        case AttackKind::none: return 0.0;
        case AttackKind::fgsm: return epsilon;
        case AttackKind::pgd: return rho;
    }
    return 0.0;
}

nlohmann::json to_json(const AttackConfig& cfg) {
    nlohmann::json j = {{"kind", to_string(cfg.kind)}};
    if (cfg.kind != AttackKind::none) j["epsilon"] = cfg.epsilon;
    if (cfg.kind == AttackKind::pgd) {
        j["rho"] = cfg.rho;
        j["steps"] = cfg.steps;
    }
    return j;
}

AttackConfig attack_from_json(const nlohmann::json& j) {
    AttackConfig cfg;
    try {
        cfg.kind = attack_kind_from_string(j.at("kind").get<std::string>());
        const AttackConfig defaults =
            cfg.kind == AttackKind::pgd ? AttackConfig::pgd_default() : AttackConfig::fgsm_default();
        cfg.epsilon = j.value("epsilon", defaults.epsilon);
        cfg.rho = j.value("rho", defaults.rho);
        cfg.steps = j.value("steps", defaults.steps);
        if (cfg.kind != AttackKind::pgd) {
            cfg.rho = defaults.rho;
            cfg.steps = defaults.steps;
        }
        if (cfg.kind == AttackKind::none) {
            cfg = AttackConfig::clean();
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("malformed attack record: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::vector<double> fgsm(const RegressionNet& net, std::span<const double> x, double y, double epsilon) {
    check_attack_inputs(net, x, y);
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw Error(ErrorCode::invalid_argument, "FGSM epsilon must be positive and finite");
    }
    const GradientBundle g = backward(net, x, y, Loss::squared());
    std::vector<double> out(x.begin(), x.end());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += epsilon * sign_of(g.d_x[k]);
    return out;
}

std::vector<double> pgd(const RegressionNet& net, std::span<const double> x, double y,
                        const AttackConfig& cfg) {
    check_attack_inputs(net, x, y);
    if (cfg.kind != AttackKind::pgd) {
        throw Error(ErrorCode::invalid_argument, "pgd called with a non-PGD attack config");
    }
    cfg.validate();
    std::vector<double> current(x.begin(), x.end());
    for (std::size_t q = 0; q < cfg.steps; ++q) {
        const GradientBundle g = backward(net, current, y, Loss::squared());
        for (std::size_t k = 0; k < current.size(); ++k) {
            const double stepped = current[k] + cfg.epsilon * sign_of(g.d_x[k]);
            current[k] = std::clamp(stepped, x[k] - cfg.rho, x[k] + cfg.rho);
        }
    }
    return current;
}

std::vector<double> attack(const RegressionNet& net, std::span<const double> x, double y,
                           const AttackConfig& cfg) {
    switch (cfg.kind) {
        case AttackKind::none:
            check_attack_inputs(net, x, y);
            return {x.begin(), x.end()};
        case AttackKind::fgsm: return fgsm(net, x, y, cfg.epsilon);
        case AttackKind::pgd: return pgd(net, x, y, cfg);
    }
    return {x.begin(), x.end()};
}

}  // namespace advreg
