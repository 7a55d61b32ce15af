#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fdnn/rng.hpp"
#include "fdnn/tensor.hpp"

namespace fdnn {

enum class Mode { Train, Eval };

// A trainable tensor with its same-shaped gradient slot. Gradients
// accumulate across backward calls; the caller zeroes them between steps.
struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
};

// Non-trainable persistent tensor (batch-norm running statistics).
struct StateRef {
    std::string name;
    Tensor* value = nullptr;
};

class Layer {
public:
    virtual ~Layer() = default;

    // Train-mode forward caches what backward needs; eval-mode forward
    // mutates nothing except batch-norm never updating running stats.
    virtual Tensor forward(const Tensor& x, Mode mode) = 0;

    // Gradients of the last train-mode forward. Accumulates into parameter
    // grad slots and returns the gradient w.r.t. the layer input.
    virtual Tensor backward(const Tensor& grad_out) = 0;

    virtual std::string kind() const = 0;
    virtual void collect_params(const std::string&, std::vector<ParamRef>&) {}
    virtual void collect_state(const std::string&, std::vector<StateRef>&) {}
    virtual void init_weights(Rng&) {}
};

class Conv2d : public Layer {
public:
    // weight: out x in x kh x kw, cross-correlation (no kernel flip).
    Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
           std::size_t pad);

    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "conv"; }
    void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
    void init_weights(Rng& rng) override;

    Tensor& weight() { return weight_; }
    Tensor& bias() { return bias_; }

private:
    std::size_t in_ch_, out_ch_, k_, stride_, pad_;
    Tensor weight_, bias_, grad_weight_, grad_bias_;
    Tensor cached_input_;
    bool has_cache_ = false;
};

class Deconv2d : public Layer {
public:
    // weight: in x out x kh x kw; forward is the exact linear adjoint of the
    // Conv2d forward that shares the same flat weight buffer.
    Deconv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
             std::size_t pad);

    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "deconv"; }
    void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
    void init_weights(Rng& rng) override;

    Tensor& weight() { return weight_; }
    Tensor& bias() { return bias_; }

private:
    std::size_t in_ch_, out_ch_, k_, stride_, pad_;
    Tensor weight_, bias_, grad_weight_, grad_bias_;
    Tensor cached_input_;
    bool has_cache_ = false;
};

class Linear : public Layer {
public:
    // y = x W^T + b, weight: out x in.
    Linear(std::size_t in_features, std::size_t out_features);

    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "linear"; }
    void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
    void init_weights(Rng& rng) override;

    Tensor& weight() { return weight_; }
    Tensor& bias() { return bias_; }

private:
    std::size_t in_f_, out_f_;
    Tensor weight_, bias_, grad_weight_, grad_bias_;
    Tensor cached_input_;
    bool has_cache_ = false;
};

class BatchNorm2d : public Layer {
public:
    explicit BatchNorm2d(std::size_t channels, double eps = 1e-5, double momentum = 0.1);

    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "batchnorm"; }
    void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
    void collect_state(const std::string& prefix, std::vector<StateRef>& out) override;
    void init_weights(Rng& rng) override;

private:
    std::size_t channels_;
    double eps_, momentum_;
    Tensor gamma_, beta_, grad_gamma_, grad_beta_;
    Tensor running_mean_, running_var_;
    Tensor cached_xhat_, cached_inv_std_;
    std::vector<std::size_t> cached_shape_;
    bool has_cache_ = false;
};

class LeakyReLU : public Layer {
public:
    explicit LeakyReLU(double slope = 0.2) : slope_(slope) {}

    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "leaky_relu"; }

    double slope() const { return slope_; }

private:
    double slope_;
    Tensor cached_input_;
    bool has_cache_ = false;
};

class Sigmoid : public Layer {
public:
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "sigmoid"; }

private:
    Tensor cached_output_;
    bool has_cache_ = false;
};

class Tanh : public Layer {
public:
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "tanh"; }

private:
    Tensor cached_output_;
    bool has_cache_ = false;
};

// N x C x H x W -> N x (C*H*W)
class Flatten : public Layer {
public:
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "flatten"; }

private:
    std::vector<std::size_t> cached_shape_;
    bool has_cache_ = false;
};

// N x F -> N x c x h x w with F == c*h*w
class Reshape : public Layer {
public:
    Reshape(std::size_t c, std::size_t h, std::size_t w) : c_(c), h_(h), w_(w) {}

    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "reshape"; }

private:
    std::size_t c_, h_, w_;
    std::vector<std::size_t> cached_shape_;
    bool has_cache_ = false;
};

// Ordered layer pipeline with a deterministic parameter registry.
// Single-writer: forward/backward/update must be externally serialized.
class LayerStack {
public:
    LayerStack() = default;
    LayerStack(LayerStack&&) = default;
    LayerStack& operator=(LayerStack&&) = default;

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    std::size_t size() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }

    void set_mode(Mode m) { mode_ = m; }
    Mode mode() const { return mode_; }

    Tensor forward(const Tensor& x);
    // Forward through layers [begin, end) only; does not arm backward.
    Tensor forward_range(const Tensor& x, std::size_t begin, std::size_t end, Mode mode);
    Tensor backward(const Tensor& grad_out);

    // Parameter names are "<layer index>.<kind>.<param>", in layer order.
    std::vector<ParamRef> parameters();
    // Parameters plus running statistics; the checkpoint registry.
    std::vector<StateRef> named_tensors();
    void zero_grads();
    std::size_t parameter_count();

    void init_weights(Rng& rng);

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    Mode mode_ = Mode::Train;
    bool armed_ = false;  // a train-mode forward ran and caches are intact
};

// Central-finite-difference check of the whole stack's backward pass with a
// sum-of-outputs loss head. Returns the max guarded relative error over all
// parameter and input gradients.
double grad_check(LayerStack& stack, const Tensor& x, double h = 1e-6);

}  // namespace fdnn
