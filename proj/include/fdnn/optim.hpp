#pragma once

#include <cstdint>
#include <vector>

#include "fdnn/layers.hpp"
#include "fdnn/tensor.hpp"

namespace fdnn {

// Per-parameter RMS accumulator for one network. Single-writer, bound to
// that network's update loop.
class OptimState {
public:
    OptimState() = default;
    OptimState(const std::vector<ParamRef>& params, double alpha, double beta, double eps);

    double alpha() const { return alpha_; }
    void set_alpha(double a) { alpha_ = a; }
    double beta() const { return beta_; }
    double eps() const { return eps_; }
    std::uint64_t iter() const { return iter_; }
    void set_iter(std::uint64_t i) { iter_ = i; }

    std::vector<Tensor>& delta() { return delta_; }
    const std::vector<Tensor>& delta() const { return delta_; }

private:
    friend void rmsprop_step(std::vector<ParamRef>&, OptimState&, double);
    std::vector<Tensor> delta_;
    double alpha_ = 0.001;
    double beta_ = 0.01;
    double eps_ = 1e-8;
    std::uint64_t iter_ = 0;
};

// delta <- beta*delta + (1-beta)*g^2;  theta <- theta + alpha*g/sqrt(delta+eps)
void rmsprop_ascend(std::vector<ParamRef>& params, OptimState& state);

// Same accumulator update with a descending parameter step.
void rmsprop_descend(std::vector<ParamRef>& params, OptimState& state);

// Epoch-indexed adversarial weight: max(lambda0 * 0.995^n, lambda0/2).
double lambda_at(std::size_t epoch, double lambda0 = 0.01);

// Epoch-indexed learning rate: alpha0 * 0.99^n.
double alpha_at(std::size_t epoch, double alpha0 = 0.001);

}  // namespace fdnn
