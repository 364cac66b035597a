#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "advreg/net.hpp"
#include "json.hpp"

namespace advreg {

enum class AttackKind { none, fgsm, pgd };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& name);

/// White-box L-infinity evasion attack maximizing (y - f(x))^2.
struct AttackConfig {
    AttackKind kind = AttackKind::none;
    double epsilon = 0.1;   // FGSM magnitude, or PGD step size
    double rho = 0.1;       // PGD clipping radius
    std::size_t steps = 10; // PGD iterations

    static AttackConfig clean() { return {}; }
    static AttackConfig fgsm_default() { return {AttackKind::fgsm, 0.1, 0.1, 1}; }
    static AttackConfig pgd_default() { return {AttackKind::pgd, 0.025, 0.1, 10}; }

    void validate() const;
    /// A PGD step longer than the ball diameter is legal but wasteful.
    bool oversized_step() const { return kind == AttackKind::pgd && epsilon > 2.0 * rho; }
    /// Radius of the ball the adversarial point is guaranteed to stay in.
    double radius() const;

    friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

nlohmann::json to_json(const AttackConfig& cfg);
AttackConfig attack_from_json(const nlohmann::json& j);

/// x + epsilon * sign(d (y - f(x))^2 / dx), with sign(0) = 0.
std::vector<double> fgsm(const RegressionNet& net, std::span<const double> x, double y, double epsilon);

/// Q signed-gradient steps of size epsilon, each clipped element-wise to [x - rho, x + rho].
std::vector<double> pgd(const RegressionNet& net, std::span<const double> x, double y,
                        const AttackConfig& cfg);

/// Dispatch on cfg.kind; AttackKind::none returns x unchanged.
std::vector<double> attack(const RegressionNet& net, std::span<const double> x, double y,
                           const AttackConfig& cfg);

}  // namespace advreg
