#include "fdnn/layers.hpp"

#include <cmath>
#include <cstring>

#include "fdnn/errors.hpp"

namespace fdnn {

namespace {

constexpr double kInitStddev = 0.02;

void require_rank4(const Tensor& x, const char* who) {
    if (x.rank() != 4) throw ShapeError(std::string(who) + ": expected NxCxHxW input, got " + shape_str(x));
}

void require_cache(bool armed, const char* who) {
    if (!armed) throw StateError(std::string(who) + ": backward without a cached train-mode forward");
}

double guarded_rel_err(double a, double b) {
    const double denom = std::max({1.0, std::fabs(a), std::fabs(b)});
    return std::fabs(a - b) / denom;
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
               std::size_t pad)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      weight_({out_ch, in_ch, kernel, kernel}),
      bias_({out_ch}),
      grad_weight_({out_ch, in_ch, kernel, kernel}),
      grad_bias_({out_ch}) {}

Tensor Conv2d::forward(const Tensor& x, Mode mode) {
    require_rank4(x, "conv2d");
    if (x.shape()[1] != in_ch_)
        throw ShapeError("conv2d: input channels " + std::to_string(x.shape()[1]) + " != expected " +
                         std::to_string(in_ch_));
    const std::size_t n = x.shape()[0], h = x.shape()[2], w = x.shape()[3];
    const std::size_t ho = conv_out_dim(h, k_, stride_, pad_);
    const std::size_t wo = conv_out_dim(w, k_, stride_, pad_);
    const std::size_t kdim = in_ch_ * k_ * k_;
    const std::size_t pdim = ho * wo;

    Tensor y({n, out_ch_, ho, wo});
    Tensor cols({kdim, pdim});
    for (std::size_t s = 0; s < n; ++s) {
        im2col_raw(x.data() + s * in_ch_ * h * w, cols.data(), in_ch_, h, w, k_, k_, stride_, pad_);
        double* ys = y.data() + s * out_ch_ * pdim;
        matmul_raw(weight_.data(), cols.data(), ys, out_ch_, kdim, pdim);
        for (std::size_t co = 0; co < out_ch_; ++co) {
            const double b = bias_[co];
            double* row = ys + co * pdim;
            for (std::size_t p = 0; p < pdim; ++p) row[p] += b;
        }
    }
    if (mode == Mode::Train) {
        cached_input_ = x;
        has_cache_ = true;
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "conv2d");
    const Tensor& x = cached_input_;
    const std::size_t n = x.shape()[0], h = x.shape()[2], w = x.shape()[3];
    const std::size_t ho = grad_out.shape()[2], wo = grad_out.shape()[3];
    const std::size_t kdim = in_ch_ * k_ * k_;
    const std::size_t pdim = ho * wo;
    if (grad_out.shape()[0] != n || grad_out.shape()[1] != out_ch_)
        throw ShapeError("conv2d backward: gradient shape " + shape_str(grad_out) +
                         " does not match forward output");

    Tensor grad_x({n, in_ch_, h, w});
    Tensor cols({kdim, pdim});
    Tensor grad_cols({kdim, pdim});
    for (std::size_t s = 0; s < n; ++s) {
        const double* gys = grad_out.data() + s * out_ch_ * pdim;
        im2col_raw(x.data() + s * in_ch_ * h * w, cols.data(), in_ch_, h, w, k_, k_, stride_, pad_);
        // dW += dY cols^T, dX = col2im(W^T dY), db += row sums of dY
        matmul_nt_acc_raw(gys, cols.data(), grad_weight_.data(), out_ch_, pdim, kdim);
        grad_cols.fill(0.0);
        matmul_tn_acc_raw(weight_.data(), gys, grad_cols.data(), out_ch_, kdim, pdim);
        col2im_raw(grad_cols.data(), grad_x.data() + s * in_ch_ * h * w, in_ch_, h, w, k_, k_,
                   stride_, pad_);
        for (std::size_t co = 0; co < out_ch_; ++co) {
            const double* row = gys + co * pdim;
            double acc = 0.0;
            for (std::size_t p = 0; p < pdim; ++p) acc += row[p];
            grad_bias_[co] += acc;
        }
    }
    return grad_x;
}

void Conv2d::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weight", &weight_, &grad_weight_});
    out.push_back({prefix + ".bias", &bias_, &grad_bias_});
}

void Conv2d::init_weights(Rng& rng) {
    for (std::size_t i = 0; i < weight_.size(); ++i) weight_[i] = rng.normal(0.0, kInitStddev);
    bias_.fill(0.0);
}

// -------------------------------------------------------------- Deconv2d

Deconv2d::Deconv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                   std::size_t pad)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      weight_({in_ch, out_ch, kernel, kernel}),
      bias_({out_ch}),
      grad_weight_({in_ch, out_ch, kernel, kernel}),
      grad_bias_({out_ch}) {}

Tensor Deconv2d::forward(const Tensor& x, Mode mode) {
    require_rank4(x, "deconv2d");
    if (x.shape()[1] != in_ch_)
        throw ShapeError("deconv2d: input channels " + std::to_string(x.shape()[1]) +
                         " != expected " + std::to_string(in_ch_));
    const std::size_t n = x.shape()[0], hi = x.shape()[2], wi = x.shape()[3];
    // Ho = (Hi-1)*s - 2p + k
    if ((hi - 1) * stride_ + k_ <= 2 * pad_ || (wi - 1) * stride_ + k_ <= 2 * pad_)
        throw ShapeError("deconv2d: padding " + std::to_string(pad_) +
                         " swallows the whole output for input " + shape_str(x));
    const std::size_t ho = (hi - 1) * stride_ + k_ - 2 * pad_;
    const std::size_t wo = (wi - 1) * stride_ + k_ - 2 * pad_;
    const std::size_t kdim = out_ch_ * k_ * k_;
    const std::size_t pdim = hi * wi;

    Tensor y({n, out_ch_, ho, wo});
    Tensor cols({kdim, pdim});
    for (std::size_t s = 0; s < n; ++s) {
        const double* xs = x.data() + s * in_ch_ * pdim;
        cols.fill(0.0);
        matmul_tn_acc_raw(weight_.data(), xs, cols.data(), in_ch_, kdim, pdim);
        double* ys = y.data() + s * out_ch_ * ho * wo;
        col2im_raw(cols.data(), ys, out_ch_, ho, wo, k_, k_, stride_, pad_);
        for (std::size_t co = 0; co < out_ch_; ++co) {
            const double b = bias_[co];
            double* plane = ys + co * ho * wo;
            for (std::size_t p = 0; p < ho * wo; ++p) plane[p] += b;
        }
    }
    if (mode == Mode::Train) {
        cached_input_ = x;
        has_cache_ = true;
    }
    return y;
}

Tensor Deconv2d::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "deconv2d");
    const Tensor& x = cached_input_;
    const std::size_t n = x.shape()[0], hi = x.shape()[2], wi = x.shape()[3];
    const std::size_t ho = grad_out.shape()[2], wo = grad_out.shape()[3];
    const std::size_t kdim = out_ch_ * k_ * k_;
    const std::size_t pdim = hi * wi;
    if (grad_out.shape()[0] != n || grad_out.shape()[1] != out_ch_)
        throw ShapeError("deconv2d backward: gradient shape " + shape_str(grad_out) +
                         " does not match forward output");

    Tensor grad_x({n, in_ch_, hi, wi});
    Tensor grad_cols({kdim, pdim});
    for (std::size_t s = 0; s < n; ++s) {
        const double* gys = grad_out.data() + s * out_ch_ * ho * wo;
        im2col_raw(gys, grad_cols.data(), out_ch_, ho, wo, k_, k_, stride_, pad_);
        // dX = W gcols, dW += X gcols^T, db += per-channel sums of dY
        matmul_raw(weight_.data(), grad_cols.data(), grad_x.data() + s * in_ch_ * pdim, in_ch_,
                   kdim, pdim);
        matmul_nt_acc_raw(x.data() + s * in_ch_ * pdim, grad_cols.data(), grad_weight_.data(),
                          in_ch_, pdim, kdim);
        for (std::size_t co = 0; co < out_ch_; ++co) {
            const double* plane = gys + co * ho * wo;
            double acc = 0.0;
            for (std::size_t p = 0; p < ho * wo; ++p) acc += plane[p];
            grad_bias_[co] += acc;
        }
    }
    return grad_x;
}

void Deconv2d::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weight", &weight_, &grad_weight_});
    out.push_back({prefix + ".bias", &bias_, &grad_bias_});
}

void Deconv2d::init_weights(Rng& rng) {
    for (std::size_t i = 0; i < weight_.size(); ++i) weight_[i] = rng.normal(0.0, kInitStddev);
    bias_.fill(0.0);
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::size_t in_features, std::size_t out_features)
    : in_f_(in_features),
      out_f_(out_features),
      weight_({out_features, in_features}),
      bias_({out_features}),
      grad_weight_({out_features, in_features}),
      grad_bias_({out_features}) {}

Tensor Linear::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 2 || x.shape()[1] != in_f_)
        throw ShapeError("linear: expected Nx" + std::to_string(in_f_) + " input, got " +
                         shape_str(x));
    const std::size_t n = x.shape()[0];
    Tensor y({n, out_f_});
    matmul_nt_raw(x.data(), weight_.data(), y.data(), n, in_f_, out_f_);
    for (std::size_t s = 0; s < n; ++s) {
        double* row = y.data() + s * out_f_;
        for (std::size_t g = 0; g < out_f_; ++g) row[g] += bias_[g];
    }
    if (mode == Mode::Train) {
        cached_input_ = x;
        has_cache_ = true;
    }
    return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "linear");
    const Tensor& x = cached_input_;
    const std::size_t n = x.shape()[0];
    if (grad_out.rank() != 2 || grad_out.shape()[0] != n || grad_out.shape()[1] != out_f_)
        throw ShapeError("linear backward: gradient shape " + shape_str(grad_out) +
                         " does not match forward output");
    Tensor grad_x({n, in_f_});
    matmul_raw(grad_out.data(), weight_.data(), grad_x.data(), n, out_f_, in_f_);
    matmul_tn_acc_raw(grad_out.data(), x.data(), grad_weight_.data(), n, out_f_, in_f_);
    for (std::size_t s = 0; s < n; ++s) {
        const double* row = grad_out.data() + s * out_f_;
        for (std::size_t g = 0; g < out_f_; ++g) grad_bias_[g] += row[g];
    }
    return grad_x;
}

void Linear::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weight", &weight_, &grad_weight_});
    out.push_back({prefix + ".bias", &bias_, &grad_bias_});
}

void Linear::init_weights(Rng& rng) {
    for (std::size_t i = 0; i < weight_.size(); ++i) weight_[i] = rng.normal(0.0, kInitStddev);
    bias_.fill(0.0);
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::size_t channels, double eps, double momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_({channels}),
      beta_({channels}),
      grad_gamma_({channels}),
      grad_beta_({channels}),
      running_mean_({channels}),
      running_var_({channels}) {
    gamma_.fill(1.0);
    running_var_.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
    require_rank4(x, "batchnorm2d");
    if (x.shape()[1] != channels_)
        throw ShapeError("batchnorm2d: input channels " + std::to_string(x.shape()[1]) +
                         " != expected " + std::to_string(channels_));
    const std::size_t n = x.shape()[0], h = x.shape()[2], w = x.shape()[3];
    const std::size_t hw = h * w;
    const std::size_t m = n * hw;
    Tensor y(x.shape());

    if (mode == Mode::Train) {
        if (m < 2)
            throw DomainError("batchnorm2d: train mode needs N*H*W >= 2 per channel, got " +
                              std::to_string(m));
        Tensor xhat(x.shape());
        Tensor inv_std({channels_});
        for (std::size_t c = 0; c < channels_; ++c) {
            double mean = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double* plane = x.data() + (s * channels_ + c) * hw;
                for (std::size_t p = 0; p < hw; ++p) mean += plane[p];
            }
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double* plane = x.data() + (s * channels_ + c) * hw;
                for (std::size_t p = 0; p < hw; ++p) {
                    const double d = plane[p] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(m);  // biased, also used for running stats
            const double is = 1.0 / std::sqrt(var + eps_);
            inv_std[c] = is;
            const double g = gamma_[c], b = beta_[c];
            for (std::size_t s = 0; s < n; ++s) {
                const double* plane = x.data() + (s * channels_ + c) * hw;
                double* xh = xhat.data() + (s * channels_ + c) * hw;
                double* yp = y.data() + (s * channels_ + c) * hw;
                for (std::size_t p = 0; p < hw; ++p) {
                    xh[p] = (plane[p] - mean) * is;
                    yp[p] = g * xh[p] + b;
                }
            }
            running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean;
            running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * var;
        }
        cached_xhat_ = std::move(xhat);
        cached_inv_std_ = std::move(inv_std);
        cached_shape_ = x.shape();
        has_cache_ = true;
    } else {
        for (std::size_t c = 0; c < channels_; ++c) {
            const double is = 1.0 / std::sqrt(running_var_[c] + eps_);
            const double g = gamma_[c], b = beta_[c], mean = running_mean_[c];
            for (std::size_t s = 0; s < n; ++s) {
                const double* plane = x.data() + (s * channels_ + c) * hw;
                double* yp = y.data() + (s * channels_ + c) * hw;
                for (std::size_t p = 0; p < hw; ++p) yp[p] = g * (plane[p] - mean) * is + b;
            }
        }
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "batchnorm2d");
    if (grad_out.shape() != cached_shape_)
        throw ShapeError("batchnorm2d backward: gradient shape " + shape_str(grad_out) +
                         " does not match forward output");
    const std::size_t n = cached_shape_[0], h = cached_shape_[2], w = cached_shape_[3];
    const std::size_t hw = h * w;
    const double m = static_cast<double>(n * hw);
    Tensor grad_x(cached_shape_);
    for (std::size_t c = 0; c < channels_; ++c) {
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double* gy = grad_out.data() + (s * channels_ + c) * hw;
            const double* xh = cached_xhat_.data() + (s * channels_ + c) * hw;
            for (std::size_t p = 0; p < hw; ++p) {
                sum_gy += gy[p];
                sum_gy_xhat += gy[p] * xh[p];
            }
        }
        grad_gamma_[c] += sum_gy_xhat;
        grad_beta_[c] += sum_gy;
        const double coeff = gamma_[c] * cached_inv_std_[c];
        const double mean_gy = sum_gy / m;
        const double mean_gy_xhat = sum_gy_xhat / m;
        for (std::size_t s = 0; s < n; ++s) {
            const double* gy = grad_out.data() + (s * channels_ + c) * hw;
            const double* xh = cached_xhat_.data() + (s * channels_ + c) * hw;
            double* gx = grad_x.data() + (s * channels_ + c) * hw;
            for (std::size_t p = 0; p < hw; ++p)
                gx[p] = coeff * (gy[p] - mean_gy - xh[p] * mean_gy_xhat);
        }
    }
    return grad_x;
}

void BatchNorm2d::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".gamma", &gamma_, &grad_gamma_});
    out.push_back({prefix + ".beta", &beta_, &grad_beta_});
}

void BatchNorm2d::collect_state(const std::string& prefix, std::vector<StateRef>& out) {
    out.push_back({prefix + ".running_mean", &running_mean_});
    out.push_back({prefix + ".running_var", &running_var_});
}

void BatchNorm2d::init_weights(Rng& rng) {
    for (std::size_t i = 0; i < gamma_.size(); ++i) gamma_[i] = rng.normal(1.0, kInitStddev);
    beta_.fill(0.0);
    running_mean_.fill(0.0);
    running_var_.fill(1.0);
}

// ------------------------------------------------------------ activations

Tensor LeakyReLU::forward(const Tensor& x, Mode mode) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] >= 0.0 ? x[i] : slope_ * x[i];
    if (mode == Mode::Train) {
        cached_input_ = x;
        has_cache_ = true;
    }
    return y;
}

Tensor LeakyReLU::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "leaky_relu");
    if (!grad_out.same_shape(cached_input_))
        throw ShapeError("leaky_relu backward: gradient shape " + shape_str(grad_out) +
                         " does not match forward output");
    Tensor grad_x(grad_out.shape());
    // derivative at exactly 0 is 1 (the x >= 0 branch)
    for (std::size_t i = 0; i < grad_out.size(); ++i)
        grad_x[i] = cached_input_[i] >= 0.0 ? grad_out[i] : slope_ * grad_out[i];
    return grad_x;
}

Tensor Sigmoid::forward(const Tensor& x, Mode mode) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
    if (mode == Mode::Train) {
        cached_output_ = y;
        has_cache_ = true;
    }
    return y;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "sigmoid");
    if (!grad_out.same_shape(cached_output_))
        throw ShapeError("sigmoid backward: gradient shape " + shape_str(grad_out) +
                         " does not match forward output");
    Tensor grad_x(grad_out.shape());
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        const double y = cached_output_[i];
        grad_x[i] = grad_out[i] * y * (1.0 - y);
    }
    return grad_x;
}

Tensor Tanh::forward(const Tensor& x, Mode mode) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    if (mode == Mode::Train) {
        cached_output_ = y;
        has_cache_ = true;
    }
    return y;
}

Tensor Tanh::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "tanh");
    if (!grad_out.same_shape(cached_output_))
        throw ShapeError("tanh backward: gradient shape " + shape_str(grad_out) +
                         " does not match forward output");
    Tensor grad_x(grad_out.shape());
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        const double y = cached_output_[i];
        grad_x[i] = grad_out[i] * (1.0 - y * y);
    }
    return grad_x;
}

// --------------------------------------------------------- shape plumbing

Tensor Flatten::forward(const Tensor& x, Mode mode) {
    if (x.rank() < 2) throw ShapeError("flatten: expected rank >= 2, got " + shape_str(x));
    std::size_t rest = 1;
    for (std::size_t i = 1; i < x.rank(); ++i) rest *= x.shape()[i];
    if (mode == Mode::Train) {
        cached_shape_ = x.shape();
        has_cache_ = true;
    }
    return x.reshaped({x.shape()[0], rest});
}

Tensor Flatten::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "flatten");
    return grad_out.reshaped(cached_shape_);
}

Tensor Reshape::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 2 || x.shape()[1] != c_ * h_ * w_)
        throw ShapeError("reshape: expected Nx" + std::to_string(c_ * h_ * w_) + " input, got " +
                         shape_str(x));
    if (mode == Mode::Train) {
        cached_shape_ = x.shape();
        has_cache_ = true;
    }
    return x.reshaped({x.shape()[0], c_, h_, w_});
}

Tensor Reshape::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "reshape");
    return grad_out.reshaped(cached_shape_);
}

// -------------------------------------------------------------- LayerStack

Tensor LayerStack::forward(const Tensor& x) {
    Tensor cur = x;
    for (auto& l : layers_) cur = l->forward(cur, mode_);
    armed_ = (mode_ == Mode::Train);
    return cur;
}

Tensor LayerStack::forward_range(const Tensor& x, std::size_t begin, std::size_t end, Mode mode) {
    if (begin > end || end > layers_.size())
        throw ConfigError("forward_range: invalid layer range [" + std::to_string(begin) + ", " +
                          std::to_string(end) + ") of " + std::to_string(layers_.size()));
    Tensor cur = x;
    for (std::size_t i = begin; i < end; ++i) cur = layers_[i]->forward(cur, mode);
    return cur;
}

Tensor LayerStack::backward(const Tensor& grad_out) {
    if (!armed_) throw StateError("stack backward without a cached train-mode forward");
    Tensor cur = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    armed_ = false;
    return cur;
}

std::vector<ParamRef> LayerStack::parameters() {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        layers_[i]->collect_params(std::to_string(i) + "." + layers_[i]->kind(), out);
    return out;
}

std::vector<StateRef> LayerStack::named_tensors() {
    std::vector<StateRef> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string prefix = std::to_string(i) + "." + layers_[i]->kind();
        std::vector<ParamRef> params;
        layers_[i]->collect_params(prefix, params);
        for (auto& p : params) out.push_back({p.name, p.value});
        layers_[i]->collect_state(prefix, out);
    }
    return out;
}

void LayerStack::zero_grads() {
    for (auto& p : parameters()) p.grad->fill(0.0);
}

std::size_t LayerStack::parameter_count() {
    std::size_t n = 0;
    for (auto& p : parameters()) n += p.value->size();
    return n;
}

void LayerStack::init_weights(Rng& rng) {
    for (auto& l : layers_) l->init_weights(rng);
}

// -------------------------------------------------------------- grad_check

double grad_check(LayerStack& stack, const Tensor& x, double h) {
    const Mode saved = stack.mode();
    stack.set_mode(Mode::Train);
    stack.zero_grads();
    Tensor out = stack.forward(x);
    Tensor seed(out.shape());
    seed.fill(1.0);
    Tensor grad_x = stack.backward(seed);

    auto params = stack.parameters();
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(*p.grad);

    double max_rel = 0.0;
    auto loss_at = [&](const Tensor& input) { return sum(stack.forward(input)); };

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& value = *params[pi].value;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double orig = value[i];
            value[i] = orig + h;
            const double lp = loss_at(x);
            value[i] = orig - h;
            const double lm = loss_at(x);
            value[i] = orig;
            max_rel = std::max(max_rel, guarded_rel_err(analytic[pi][i], (lp - lm) / (2.0 * h)));
        }
    }
    Tensor xp = x;
    for (std::size_t i = 0; i < xp.size(); ++i) {
        const double orig = xp[i];
        xp[i] = orig + h;
        const double lp = loss_at(xp);
        xp[i] = orig - h;
        const double lm = loss_at(xp);
        xp[i] = orig;
        max_rel = std::max(max_rel, guarded_rel_err(grad_x[i], (lp - lm) / (2.0 * h)));
    }
    stack.set_mode(saved);
    return max_rel;
}

}  // namespace fdnn
