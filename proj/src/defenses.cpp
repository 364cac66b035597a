#include "advreg/defenses.hpp"

#include <cmath>

#include "advreg/error.hpp"

namespace advreg {

namespace {

struct StabilityTerm {
    double value = 0.0;
    std::vector<double> grad;  // of lambda * value; empty when not requested
};

// Shared draw-and-evaluate loop so the penalty and its gradient see the same samples.
StabilityTerm stability_term(const RegressionNet& net, std::span<const double> x,
                             const NeighborInfo& neighbor, const DefenseConfig& cfg, Rng& rng,
                             bool want_grad) {
    const std::size_t in = net.input_dim();
    const double radius = cfg.beta * neighbor.nn_distance;

    StabilityTerm term;
    if (want_grad) term.grad.assign(net.parameter_count(), 0.0);

    const ForwardTrace center = forward_trace(net, x);

    std::vector<double> dx(in);
    std::vector<double> moved(in);
    ForwardTrace shifted;

    double sum = 0.0;
    double center_coef = 0.0;
    const double sample_weight = 1.0 / static_cast<double>(cfg.n_samples);
    for (std::size_t s = 0; s < cfg.n_samples; ++s) {
        for (std::size_t k = 0; k < in; ++k) {
            dx[k] = rng.uniform(-radius, radius);
        }
        if (radius == 0.0) continue;  // duplicate training point: degenerate ball

        for (std::size_t k = 0; k < in; ++k) moved[k] = x[k] + dx[k];
        forward_into(net, moved, shifted);
        const double dy = center.output - shifted.output;
        if (!(std::abs(dy) > neighbor.label_gap)) continue;

        sum += dy * dy;
        if (want_grad) {
            // d(dy^2)/dtheta = 2 dy (df(x) - df(x + dx))
            const double coef = 2.0 * cfg.lambda * dy * sample_weight;
            center_coef += coef;
            accumulate_output_grad(net, shifted, moved, -coef, term.grad);
        }
    }
    if (want_grad && center_coef != 0.0) {
        accumulate_output_grad(net, center, x, center_coef, term.grad);
    }
    term.value = sum * sample_weight;
    return term;
}

void check_stability_inputs(const RegressionNet& net, std::span<const double> x,
                            const NeighborInfo& neighbor, const DefenseConfig& cfg) {
    check_input(net, x);
    cfg.validate();
    if (!(neighbor.nn_distance >= 0.0) || std::isnan(neighbor.label_gap) || neighbor.label_gap < 0.0) {
        throw Error(ErrorCode::invalid_argument, "neighbor distance and label gap must be nonnegative");
    }
}

}  // namespace

std::string to_string(DefenseKind kind) {
    switch (kind) {
        case DefenseKind::none: return "none";
        case DefenseKind::pseudo_huber: return "pseudo_huber";
        case DefenseKind::grad_reg: return "grad_reg";
        case DefenseKind::ansr: return "ansr";
        case DefenseKind::combined: return "combined";
    }
    return "none";
}

DefenseKind defense_kind_from_string(const std::string& name) {
    for (DefenseKind k : {DefenseKind::none, DefenseKind::pseudo_huber, DefenseKind::grad_reg,
                          DefenseKind::ansr, DefenseKind::combined}) {
        if (to_string(k) == name) return k;
    }
    throw Error(ErrorCode::invalid_argument, "unknown defense '" + name + "'");
}

void DefenseConfig::validate() const {
    for (double v : {delta, sigma, lambda, beta}) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::invalid_argument, "defense parameters must be finite");
        }
    }
    if (uses_pseudo_huber() && !(delta > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "delta must be positive");
    }
    if (uses_grad_penalty() && sigma < 0.0) {
        throw Error(ErrorCode::invalid_argument, "sigma must be nonnegative");
    }
    if (uses_stability_penalty()) {
        if (lambda < 0.0) throw Error(ErrorCode::invalid_argument, "lambda must be nonnegative");
        if (!(beta > 0.0)) throw Error(ErrorCode::invalid_argument, "beta must be positive");
    }
    if (n_samples < 1) {
        throw Error(ErrorCode::invalid_argument, "n_samples must be at least 1");
    }
}

Loss DefenseConfig::primary_loss() const {
    return uses_pseudo_huber() ? Loss::pseudo_huber(delta) : Loss::squared();
}

nlohmann::json to_json(const DefenseConfig& cfg) {
    return {
        {"kind", to_string(cfg.kind)},
        {"delta", cfg.delta},
        {"sigma", cfg.sigma},
        {"lambda", cfg.lambda},
        {"beta", cfg.beta},
        {"n_samples", cfg.n_samples},
    };
}

DefenseConfig defense_from_json(const nlohmann::json& j) {
    DefenseConfig cfg;
    try {
        cfg.kind = defense_kind_from_string(j.at("kind").get<std::string>());
        cfg.delta = j.value("delta", cfg.delta);
        cfg.sigma = j.value("sigma", cfg.sigma);
        cfg.lambda = j.value("lambda", cfg.lambda);
        cfg.beta = j.value("beta", cfg.beta);
        cfg.n_samples = j.value("n_samples", cfg.n_samples);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("malformed defense record: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

double pseudo_huber(double a, double delta) {
    return Loss::pseudo_huber(delta).value(a);
}

double ansr_penalty(const RegressionNet& net, std::span<const double> x, const NeighborInfo& neighbor,
                    const DefenseConfig& cfg, Rng& rng) {
    check_stability_inputs(net, x, neighbor, cfg);
    return stability_term(net, x, neighbor, cfg, rng, false).value;
}

std::vector<double> ansr_param_grad(const RegressionNet& net, std::span<const double> x,
                                    const NeighborInfo& neighbor, const DefenseConfig& cfg, Rng& rng) {
    check_stability_inputs(net, x, neighbor, cfg);
    return stability_term(net, x, neighbor, cfg, rng, true).grad;
}

LossAndGrad total_loss_grad(const RegressionNet& net, std::span<const double> x, double y,
                            const NeighborInfo& neighbor, const DefenseConfig& cfg, Rng& rng) {
    cfg.validate();
    const Loss loss = cfg.primary_loss();
    GradientBundle primary = backward(net, x, y, loss);

    LossAndGrad out;
    out.value = primary.value;
    out.grad = std::move(primary.d_theta);

    if (cfg.uses_grad_penalty() && cfg.sigma != 0.0) {
        out.value += grad_penalty_value(net, x, y, cfg.sigma, loss);
        const auto g = grad_penalty_param_grad(net, x, y, cfg.sigma, loss);
        for (std::size_t i = 0; i < g.size(); ++i) out.grad[i] += g[i];
    }
    if (cfg.uses_stability_penalty()) {
        check_stability_inputs(net, x, neighbor, cfg);
        const StabilityTerm term = stability_term(net, x, neighbor, cfg, rng, true);
        out.value += cfg.lambda * term.value;
        for (std::size_t i = 0; i < term.grad.size(); ++i) out.grad[i] += term.grad[i];
    }
    return out;
}

}  // namespace advreg
