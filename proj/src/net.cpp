#include "advreg/net.hpp"

#include <algorithm>
#include <cmath>

#include "advreg/error.hpp"
#include "advreg/rng.hpp"

namespace advreg {

namespace {

double sigmoid(double v) {
    if (v >= 0.0) {
        return 1.0 / (1.0 + std::exp(-v));
    }
    const double e = std::exp(v);
    return e / (1.0 + e);
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// First and second derivative of the output activation at out_pre.
struct ActivationSlope {
    double first;
    double second;
};

ActivationSlope activation_slope(OutputActivation act, double output) {
    if (act == OutputActivation::identity) {
        return {1.0, 0.0};
    }
    const double s = output;
    return {s * (1.0 - s), s * (1.0 - s) * (1.0 - 2.0 * s)};
}

}  // namespace

std::string to_string(OutputActivation act) {
    return act == OutputActivation::sigmoid ? "sigmoid" : "identity";
}

OutputActivation output_activation_from_string(const std::string& name) {
    if (name == "identity") return OutputActivation::identity;
    if (name == "sigmoid") return OutputActivation::sigmoid;
    throw Error(ErrorCode::invalid_argument, "unknown output activation '" + name + "'");
}

RegressionNet::RegressionNet(std::size_t input_dim, std::size_t hidden_dim, OutputActivation act)
    : input_dim_(input_dim),
      hidden_dim_(hidden_dim),
      act_(act),
      params_(hidden_dim * input_dim + 2 * hidden_dim + 1, 0.0) {
    if (input_dim == 0 || hidden_dim == 0) {
        throw Error(ErrorCode::invalid_argument, "network dimensions must be positive");
    }
}

RegressionNet RegressionNet::make_default(std::size_t input_dim, OutputActivation act,
                                          std::uint64_t seed) {
    RegressionNet net(input_dim, input_dim, act);
    Rng rng(seed);
    const double limit1 = std::sqrt(6.0 / static_cast<double>(input_dim + input_dim));
    for (double& w : net.w1()) w = rng.uniform(-limit1, limit1);
    const double limit2 = std::sqrt(6.0 / static_cast<double>(input_dim + 1));
    for (double& w : net.w2()) w = rng.uniform(-limit2, limit2);
    return net;
}

bool RegressionNet::all_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

Loss Loss::pseudo_huber(double delta) {
    if (!(delta > 0.0) || !std::isfinite(delta)) {
        throw Error(ErrorCode::invalid_argument, "pseudo-Huber delta must be positive and finite");
    }
    return {Kind::pseudo_huber, delta};
}

double Loss::value(double a) const {
    if (kind == Kind::squared) return a * a;
    const double r = a / delta;
    return delta * delta * (std::sqrt(1.0 + r * r) - 1.0);
}

double Loss::derivative(double a) const {
    if (kind == Kind::squared) return 2.0 * a;
    const double r = a / delta;
    return a / std::sqrt(1.0 + r * r);
}

double Loss::second_derivative(double a) const {
    if (kind == Kind::squared) return 2.0;
    const double r = a / delta;
    const double q = 1.0 + r * r;
    return 1.0 / (q * std::sqrt(q));
}

void check_input(const RegressionNet& net, std::span<const double> x) {
    if (x.size() != net.input_dim()) {
        throw Error(ErrorCode::dimension_mismatch,
                    "input has " + std::to_string(x.size()) + " features, network expects " +
                        std::to_string(net.input_dim()));
    }
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!std::isfinite(x[k])) {
            throw Error(ErrorCode::non_finite, "input feature " + std::to_string(k) + " is not finite");
        }
    }
}

ForwardTrace forward_trace(const RegressionNet& net, std::span<const double> x) {
    ForwardTrace t;
    forward_into(net, x, t);
    return t;
}

void forward_into(const RegressionNet& net, std::span<const double> x, ForwardTrace& t) {
    const std::size_t hidden = net.hidden_dim();
    const std::size_t in = net.input_dim();
    const auto w1 = net.w1();
    const auto b1 = net.b1();
    const auto w2 = net.w2();

    t.pre.resize(hidden);
    t.hidden.resize(hidden);
    double o = net.b2();
    for (std::size_t j = 0; j < hidden; ++j) {
        const double* row = w1.data() + j * in;
        double z = b1[j];
        for (std::size_t k = 0; k < in; ++k) z += row[k] * x[k];
        t.pre[j] = z;
        t.hidden[j] = z > 0.0 ? z : 0.0;
        o += w2[j] * t.hidden[j];
    }
    t.out_pre = o;
    t.output = net.output_activation() == OutputActivation::sigmoid ? sigmoid(o) : o;
}

double forward(const RegressionNet& net, std::span<const double> x) {
    check_input(net, x);
    return forward_trace(net, x).output;
}

void accumulate_output_grad(const RegressionNet& net, const ForwardTrace& trace,
                            std::span<const double> x, double scale, std::span<double> d_theta) {
    const std::size_t hidden = net.hidden_dim();
    const std::size_t in = net.input_dim();
    const auto w2 = net.w2();
    const double g_o = scale * activation_slope(net.output_activation(), trace.output).first;

    double* dw1 = d_theta.data();
    double* db1 = d_theta.data() + net.b1_offset();
    double* dw2 = d_theta.data() + net.w2_offset();
    for (std::size_t j = 0; j < hidden; ++j) {
        dw2[j] += g_o * trace.hidden[j];
        if (trace.pre[j] > 0.0) {
            const double g_z = g_o * w2[j];
            db1[j] += g_z;
            double* row = dw1 + j * in;
            for (std::size_t k = 0; k < in; ++k) row[k] += g_z * x[k];
        }
    }
    d_theta[net.b2_offset()] += g_o;
}

GradientBundle backward(const RegressionNet& net, std::span<const double> x, double y,
                        const Loss& loss) {
    check_input(net, x);
    if (!std::isfinite(y)) {
        throw Error(ErrorCode::non_finite, "target is not finite");
    }
    const ForwardTrace t = forward_trace(net, x);
    const double a = y - t.output;

    GradientBundle g;
    g.value = loss.value(a);
    g.d_theta.assign(net.parameter_count(), 0.0);
    g.d_x.assign(net.input_dim(), 0.0);

    // d loss / d f = -loss'(a)
    const double dl_df = -loss.derivative(a);
    accumulate_output_grad(net, t, x, dl_df, g.d_theta);

    const double g_o = dl_df * activation_slope(net.output_activation(), t.output).first;
    const auto w1 = net.w1();
    const auto w2 = net.w2();
    const std::size_t in = net.input_dim();
    for (std::size_t j = 0; j < net.hidden_dim(); ++j) {
        if (t.pre[j] <= 0.0) continue;
        const double g_z = g_o * w2[j];
        const double* row = w1.data() + j * in;
        for (std::size_t k = 0; k < in; ++k) g.d_x[k] += g_z * row[k];
    }
    return g;
}

double grad_penalty_value(const RegressionNet& net, std::span<const double> x, double y,
                          double sigma, const Loss& loss) {
    const GradientBundle g = backward(net, x, y, loss);
    double norm = 0.0;
    for (double v : g.d_x) norm += std::abs(v);
    return sigma * norm;
}

std::vector<double> grad_penalty_param_grad(const RegressionNet& net, std::span<const double> x,
                                            double y, double sigma, const Loss& loss) {
    check_input(net, x);
    if (!std::isfinite(y)) {
        throw Error(ErrorCode::non_finite, "target is not finite");
    }
    std::vector<double> out(net.parameter_count(), 0.0);
    if (sigma == 0.0) return out;

    const std::size_t hidden = net.hidden_dim();
    const std::size_t in = net.input_dim();
    const auto w1 = net.w1();
    const auto w2 = net.w2();
    const ForwardTrace t = forward_trace(net, x);
    const double a = y - t.output;
    const ActivationSlope slope = activation_slope(net.output_activation(), t.output);

    // d loss / d f and its derivative in f.
    const double l1 = -loss.derivative(a);
    const double l2 = loss.second_derivative(a);
    const double g_o = l1 * slope.first;
    const double dgo_do = l2 * slope.first * slope.first + l1 * slope.second;

    // d_x = g_o * W1^T (mask . w2); s = sign(d_x)
    std::vector<double> d_x(in, 0.0);
    for (std::size_t j = 0; j < hidden; ++j) {
        if (t.pre[j] <= 0.0) continue;
        const double* row = w1.data() + j * in;
        for (std::size_t k = 0; k < in; ++k) d_x[k] += g_o * w2[j] * row[k];
    }
    std::vector<double> s(in);
    std::transform(d_x.begin(), d_x.end(), s.begin(), sign_of);

    // penalty = sigma * g_o * c, with c = sum_j mask_j w2_j (W1 s)_j
    std::vector<double> u(hidden, 0.0);
    double c = 0.0;
    for (std::size_t j = 0; j < hidden; ++j) {
        if (t.pre[j] <= 0.0) continue;
        const double* row = w1.data() + j * in;
        for (std::size_t k = 0; k < in; ++k) u[j] += row[k] * s[k];
        c += w2[j] * u[j];
    }

    // sigma * c * dgo/do * do/dtheta
    const double scale_o = sigma * c * dgo_do;
    double* dw1 = out.data();
    double* db1 = out.data() + net.b1_offset();
    double* dw2 = out.data() + net.w2_offset();
    for (std::size_t j = 0; j < hidden; ++j) {
        dw2[j] += scale_o * t.hidden[j];
        if (t.pre[j] > 0.0) {
            db1[j] += scale_o * w2[j];
            double* row = dw1 + j * in;
            for (std::size_t k = 0; k < in; ++k) row[k] += scale_o * w2[j] * x[k];
        }
    }
    out[net.b2_offset()] += scale_o;

    // sigma * g_o * dc/dtheta
    const double scale_c = sigma * g_o;
    for (std::size_t j = 0; j < hidden; ++j) {
        if (t.pre[j] <= 0.0) continue;
        dw2[j] += scale_c * u[j];
        double* row = dw1 + j * in;
        for (std::size_t k = 0; k < in; ++k) row[k] += scale_c * w2[j] * s[k];
    }
    return out;
}

nlohmann::json to_json(const RegressionNet& net) {
    const auto w1 = net.w1();
    const auto b1 = net.b1();
    const auto w2 = net.w2();
    return {
        {"input_dim", net.input_dim()},
        {"hidden_dim", net.hidden_dim()},
        {"output_activation", to_string(net.output_activation())},
        {"w1", std::vector<double>(w1.begin(), w1.end())},
        {"b1", std::vector<double>(b1.begin(), b1.end())},
        {"w2", std::vector<double>(w2.begin(), w2.end())},
        {"b2", net.b2()},
    };
}

RegressionNet net_from_json(const nlohmann::json& j) {
    try {
        RegressionNet net(j.at("input_dim").get<std::size_t>(), j.at("hidden_dim").get<std::size_t>(),
                          output_activation_from_string(j.at("output_activation").get<std::string>()));
        const auto copy_into = [&](const char* key, std::span<double> dst) {
            const auto values = j.at(key).get<std::vector<double>>();
            if (values.size() != dst.size()) {
                throw Error(ErrorCode::dimension_mismatch,
                            std::string("field '") + key + "' has " + std::to_string(values.size()) +
                                " entries, expected " + std::to_string(dst.size()));
            }
            std::copy(values.begin(), values.end(), dst.begin());
        };
        copy_into("w1", net.w1());
        copy_into("b1", net.b1());
        copy_into("w2", net.w2());
        net.b2() = j.at("b2").get<double>();
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("malformed network record: ") + e.what());
    }
}

}  // namespace advreg
