#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdnn/data.hpp"
#include "fdnn/layers.hpp"
#include "fdnn/optim.hpp"
#include "fdnn/tensor.hpp"

namespace fdnn {

// Sign convention for the generator's adversarial term. NonSaturating is
// -log D(G(s)), which decreases as the discriminator is fooled; Literal is
// +log D(G(s)) inside the same minimization.
enum class AdvSign { NonSaturating, Literal };

std::string adv_sign_name(AdvSign s);
AdvSign adv_sign_from_name(const std::string& name);

struct TrainConfig {
    std::size_t image_size = 32;  // multiple of 8 (three stride-2 stages)
    std::size_t base_channels = 32;
    std::size_t batch_size = 16;
    std::size_t epochs = 10;
    double lambda0 = 0.01;
    double alpha0 = 0.001;
    double beta = 0.01;
    double eps = 1e-8;
    std::uint64_t seed = 42;
    AdvSign adv_sign = AdvSign::NonSaturating;
    std::string checkpoint_path;       // optional; set by the CLI
    std::size_t checkpoint_every = 0;  // epochs between checkpoints; 0 = final only

    void validate() const;
};

// Canonical JSON form (sorted keys, round-trip-exact numbers); paths are
// not part of it.
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Encoder-decoder generator: conv blocks down to a fully-connected
// bottleneck, then deconv blocks back to image space. Input and output are
// both N x 3 x S x S; the last deconv has no batch-norm and a sigmoid head.
class Generator {
public:
    Generator() = default;
    Generator(std::size_t image_size, std::size_t base_channels);

    Tensor forward(const Tensor& x) { return stack_.forward(x); }
    Tensor backward(const Tensor& grad) { return stack_.backward(grad); }
    void set_mode(Mode m) { stack_.set_mode(m); }

    // Activations entering the bottleneck FC layer, flattened: N x 4c*(S/8)^2.
    Tensor encoder_features(const Tensor& x);

    LayerStack& stack() { return stack_; }
    std::size_t image_size() const { return image_size_; }
    std::size_t base_channels() const { return base_channels_; }
    std::size_t bottleneck_dim() const;

private:
    LayerStack stack_;
    std::size_t image_size_ = 0;
    std::size_t base_channels_ = 0;
    std::size_t fc_index_ = 0;  // layer index of the bottleneck Linear
};

// Conv + FC binary classifier with a sigmoid head; per-sample scalar
// strictly inside (0,1).
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(std::size_t image_size, std::size_t base_channels);

    Tensor forward(const Tensor& x) { return stack_.forward(x); }
    Tensor backward(const Tensor& grad) { return stack_.backward(grad); }
    void set_mode(Mode m) { stack_.set_mode(m); }

    LayerStack& stack() { return stack_; }
    std::size_t image_size() const { return image_size_; }
    std::size_t base_channels() const { return base_channels_; }

private:
    LayerStack stack_;
    std::size_t image_size_ = 0;
    std::size_t base_channels_ = 0;
};

Generator build_generator(std::size_t image_size, std::size_t base_channels = 32);
Discriminator build_discriminator(std::size_t image_size, std::size_t base_channels = 32);

// Mean over all elements of the squared difference (batch-mean Frobenius
// objective, normalized per element so the scale is size-independent).
double pixel_loss(const Tensor& generated, const Tensor& real);
Tensor pixel_loss_grad(const Tensor& generated, const Tensor& real);

// Clamp for log arguments; keeps both adversarial losses finite.
constexpr double kLogClamp = 1e-7;

// Batch mean of log d_real + log(1 - d_fake); ascended by the discriminator.
double discriminator_loss(const Tensor& d_real, const Tensor& d_fake);

double generator_adv_loss(const Tensor& d_fake, AdvSign sign);

struct StepMetrics {
    double q = 0;          // pixel loss
    double f = 0;          // discriminator objective
    double adv = 0;        // generator adversarial term
    double d_acc_real = 0;
    double d_acc_fake = 0;
};

struct EpochStats {
    std::size_t epoch = 0;
    double mean_q = 0;
    double mean_f = 0;
    double mean_adv = 0;
    double d_acc_real = 0;
    double d_acc_fake = 0;
    double lambda = 0;
    double alpha = 0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
};

// One alternating update: ascend the discriminator on (real, generated),
// then descend the generator on pixel + lambda * adversarial loss.
StepMetrics train_step(Generator& g, Discriminator& d, const Tensor& stylized, const Tensor& real,
                       double lambda, OptimState& optim_g, OptimState& optim_d, AdvSign sign);

struct TrainState {
    OptimState optim_g;
    OptimState optim_d;
    std::size_t epochs_completed = 0;
};

TrainState make_train_state(Generator& g, Discriminator& d, const TrainConfig& cfg);

struct TrainHooks {
    // Called after each epoch with its stats; return value ignored.
    std::function<void(const EpochStats&)> on_epoch;
    // Called when a checkpoint is due (per cadence and at the end).
    std::function<void(std::size_t epoch)> on_checkpoint;
};

TrainReport train(Generator& g, Discriminator& d, const PairDataset& dataset,
                  const TrainConfig& cfg, TrainState& state, const TrainHooks& hooks = {});

Image destylize(Generator& g, const Image& input);

// Encoder bottleneck activations of one image, L2-normalized.
Tensor bottleneck_embedding(Generator& g, const Image& input);

// Checkpoint layout: "FDNN" magic, u32 version, length-prefixed UTF-8 JSON
// (config + counters), then each registered tensor as name length, name,
// rank, dims (u64 LE) and a little-endian float64 payload.
void save_checkpoint(const std::filesystem::path& path, Generator& g, Discriminator& d,
                     TrainState& state, const TrainConfig& cfg);

struct Checkpoint {
    TrainConfig config;
    Generator generator;
    Discriminator discriminator;
    TrainState state;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fdnn
