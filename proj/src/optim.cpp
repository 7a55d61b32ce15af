#include "fdnn/optim.hpp"

#include <cmath>

#include "fdnn/errors.hpp"

namespace fdnn {

OptimState::OptimState(const std::vector<ParamRef>& params, double alpha, double beta, double eps)
    : alpha_(alpha), beta_(beta), eps_(eps) {
    if (eps <= 0.0) throw ConfigError("rmsprop: eps must be positive");
    delta_.reserve(params.size());
    for (const auto& p : params) delta_.emplace_back(p.value->shape());
}

void rmsprop_step(std::vector<ParamRef>& params, OptimState& state, double sign) {
    if (params.size() != state.delta_.size())
        throw ShapeError("rmsprop: state tracks " + std::to_string(state.delta_.size()) +
                         " tensors but got " + std::to_string(params.size()) + " parameters");
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& value = *params[t].value;
        const Tensor& grad = *params[t].grad;
        Tensor& delta = state.delta_[t];
        if (!value.same_shape(grad) || !value.same_shape(delta))
            throw ShapeError("rmsprop: shape mismatch for " + params[t].name + ": param " +
                             shape_str(value) + ", grad " + shape_str(grad) + ", delta " +
                             shape_str(delta));
        const double a = state.alpha_, b = state.beta_, e = state.eps_;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            delta[i] = b * delta[i] + (1.0 - b) * g * g;
            value[i] += sign * a * g / std::sqrt(delta[i] + e);
        }
    }
    ++state.iter_;
}

void rmsprop_ascend(std::vector<ParamRef>& params, OptimState& state) {
    rmsprop_step(params, state, +1.0);
}

void rmsprop_descend(std::vector<ParamRef>& params, OptimState& state) {
    rmsprop_step(params, state, -1.0);
}

double lambda_at(std::size_t epoch, double lambda0) {
    return std::max(lambda0 * std::pow(0.995, static_cast<double>(epoch)), lambda0 / 2.0);
}

double alpha_at(std::size_t epoch, double alpha0) {
    return alpha0 * std::pow(0.99, static_cast<double>(epoch));
}

}  // namespace fdnn
