#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace advreg {

enum class OutputActivation { identity, sigmoid };

std::string to_string(OutputActivation act);
OutputActivation output_activation_from_string(const std::string& name);

/**
 * Single-hidden-layer ReLU regression network
 *
 *   f(x) = act(w2 . relu(W1 x + b1) + b2)
 *
 * All parameters live in one flat vector laid out as
 * [W1 (hidden x input, row-major) | b1 | w2 | b2], which is also the layout
 * of every parameter gradient produced by this library.
 */
class RegressionNet {
public:
    RegressionNet() = default;

    /// All-zero parameters.
    RegressionNet(std::size_t input_dim, std::size_t hidden_dim,
                  OutputActivation act = OutputActivation::identity);

    /// Hidden width equal to the input width, Glorot-uniform weights, zero biases.
    static RegressionNet make_default(std::size_t input_dim, OutputActivation act, std::uint64_t seed);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t hidden_dim() const { return hidden_dim_; }
    OutputActivation output_activation() const { return act_; }
    std::size_t parameter_count() const { return params_.size(); }

    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    std::size_t b1_offset() const { return hidden_dim_ * input_dim_; }
    std::size_t w2_offset() const { return b1_offset() + hidden_dim_; }
    std::size_t b2_offset() const { return w2_offset() + hidden_dim_; }

    std::span<double> w1() { return params().subspan(0, b1_offset()); }
    std::span<const double> w1() const { return params().subspan(0, b1_offset()); }
    std::span<double> b1() { return params().subspan(b1_offset(), hidden_dim_); }
    std::span<const double> b1() const { return params().subspan(b1_offset(), hidden_dim_); }
    std::span<double> w2() { return params().subspan(w2_offset(), hidden_dim_); }
    std::span<const double> w2() const { return params().subspan(w2_offset(), hidden_dim_); }
    double& b2() { return params_[b2_offset()]; }
    double b2() const { return params_[b2_offset()]; }

    double& w1_at(std::size_t row, std::size_t col) { return params_[row * input_dim_ + col]; }
    double w1_at(std::size_t row, std::size_t col) const { return params_[row * input_dim_ + col]; }

    bool all_finite() const;

    friend bool operator==(const RegressionNet&, const RegressionNet&) = default;

private:
    std::size_t input_dim_ = 0;
    std::size_t hidden_dim_ = 0;
    OutputActivation act_ = OutputActivation::identity;
    std::vector<double> params_;
};

/// Pointwise loss on the residual a = y - f(x).
struct Loss {
    enum class Kind { squared, pseudo_huber };

    Kind kind = Kind::squared;
    double delta = 1.0;

    static Loss squared() { return {}; }
    static Loss pseudo_huber(double delta);

    double value(double residual) const;
    /// d loss / d residual
    double derivative(double residual) const;
    double second_derivative(double residual) const;
};

struct GradientBundle {
    std::vector<double> d_theta;
    std::vector<double> d_x;
    double value = 0.0;
};

/// Intermediate values of one forward pass.
struct ForwardTrace {
    std::vector<double> pre;     // W1 x + b1
    std::vector<double> hidden;  // relu(pre)
    double out_pre = 0.0;        // before the output activation
    double output = 0.0;
};

/// Throws Error(dimension_mismatch) or Error(non_finite) when x is unusable.
void check_input(const RegressionNet& net, std::span<const double> x);

double forward(const RegressionNet& net, std::span<const double> x);
ForwardTrace forward_trace(const RegressionNet& net, std::span<const double> x);
/// Unchecked forward pass reusing the trace's storage.
void forward_into(const RegressionNet& net, std::span<const double> x, ForwardTrace& trace);

/// Exact gradients of loss(y - f(x)) with respect to the parameters and to x.
GradientBundle backward(const RegressionNet& net, std::span<const double> x, double y,
                        const Loss& loss = Loss::squared());

/// d_theta += scale * d f(x) / d theta, for a trace previously computed at x.
void accumulate_output_grad(const RegressionNet& net, const ForwardTrace& trace,
                            std::span<const double> x, double scale, std::span<double> d_theta);

/// sigma * || d loss(y - f(x)) / dx ||_1
double grad_penalty_value(const RegressionNet& net, std::span<const double> x, double y,
                          double sigma, const Loss& loss = Loss::squared());

/// Parameter gradient of grad_penalty_value, holding the ReLU activation pattern and
/// sign(d loss / dx) fixed (sign(0) = 0).
std::vector<double> grad_penalty_param_grad(const RegressionNet& net, std::span<const double> x,
                                            double y, double sigma,
                                            const Loss& loss = Loss::squared());

nlohmann::json to_json(const RegressionNet& net);
RegressionNet net_from_json(const nlohmann::json& j);

}  // namespace advreg
