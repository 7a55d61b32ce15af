#include "fdnn/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "fdnn/errors.hpp"
#include "fdnn/metrics.hpp"
#include "fdnn/rng.hpp"

namespace fdnn {

namespace {

double clamp_unit(double v) { return std::clamp(v, kLogClamp, 1.0 - kLogClamp); }

void require_finite(const Tensor& t, const char* what) {
    if (!all_finite(t)) throw NumericError(std::string("non-finite value in ") + what);
}

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace

std::string adv_sign_name(AdvSign s) {
    return s == AdvSign::NonSaturating ? "nonsaturating" : "literal";
}

AdvSign adv_sign_from_name(const std::string& name) {
    if (name == "nonsaturating") return AdvSign::NonSaturating;
    if (name == "literal") return AdvSign::Literal;
    throw ConfigError("unknown adversarial sign mode '" + name +
                      "' (want nonsaturating or literal)");
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    return nlohmann::json{{"image_size", cfg.image_size},
                          {"base_channels", cfg.base_channels},
                          {"batch_size", cfg.batch_size},
                          {"epochs", cfg.epochs},
                          {"lambda0", cfg.lambda0},
                          {"alpha0", cfg.alpha0},
                          {"beta", cfg.beta},
                          {"eps", cfg.eps},
                          {"seed", cfg.seed},
                          {"adv_sign", adv_sign_name(cfg.adv_sign)},
                          {"checkpoint_every", cfg.checkpoint_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    try {
        if (j.contains("image_size")) cfg.image_size = j.at("image_size").get<std::size_t>();
        if (j.contains("base_channels")) cfg.base_channels = j.at("base_channels").get<std::size_t>();
        if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::size_t>();
        if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<std::size_t>();
        if (j.contains("lambda0")) cfg.lambda0 = j.at("lambda0").get<double>();
        if (j.contains("alpha0")) cfg.alpha0 = j.at("alpha0").get<double>();
        if (j.contains("beta")) cfg.beta = j.at("beta").get<double>();
        if (j.contains("eps")) cfg.eps = j.at("eps").get<double>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("adv_sign")) cfg.adv_sign = adv_sign_from_name(j.at("adv_sign").get<std::string>());
        if (j.contains("checkpoint_every"))
            cfg.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return cfg;
}

void TrainConfig::validate() const {
    if (image_size < 8 || image_size % 8 != 0)
        throw ConfigError("image size must be a positive multiple of 8, got " +
                          std::to_string(image_size));
    if (base_channels < 1) throw ConfigError("base channels must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (alpha0 <= 0.0) throw ConfigError("alpha0 must be positive");
    if (lambda0 < 0.0) throw ConfigError("lambda0 must be nonnegative");
    if (beta < 0.0 || beta >= 1.0) throw ConfigError("beta must lie in [0,1)");
    if (eps <= 0.0) throw ConfigError("eps must be positive");
}

// ------------------------------------------------------------- topologies

Generator::Generator(std::size_t image_size, std::size_t base_channels)
    : image_size_(image_size), base_channels_(base_channels) {
    if (image_size < 8 || image_size % 8 != 0)
        throw ConfigError("generator image size must be a positive multiple of 8, got " +
                          std::to_string(image_size));
    if (base_channels < 1) throw ConfigError("generator base channels must be >= 1");
    const std::size_t c = base_channels;
    const std::size_t s8 = image_size / 8;
    const std::size_t fc = 4 * c * s8 * s8;

    stack_.add(std::make_unique<Conv2d>(3, c, 4, 2, 1));
    stack_.add(std::make_unique<BatchNorm2d>(c));
    stack_.add(std::make_unique<LeakyReLU>(0.2));
    stack_.add(std::make_unique<Conv2d>(c, 2 * c, 4, 2, 1));
    stack_.add(std::make_unique<BatchNorm2d>(2 * c));
    stack_.add(std::make_unique<LeakyReLU>(0.2));
    stack_.add(std::make_unique<Conv2d>(2 * c, 4 * c, 4, 2, 1));
    stack_.add(std::make_unique<BatchNorm2d>(4 * c));
    stack_.add(std::make_unique<LeakyReLU>(0.2));
    stack_.add(std::make_unique<Flatten>());
    fc_index_ = stack_.size();
    stack_.add(std::make_unique<Linear>(fc, fc));
    stack_.add(std::make_unique<LeakyReLU>(0.2));
    stack_.add(std::make_unique<Reshape>(4 * c, s8, s8));
    stack_.add(std::make_unique<Deconv2d>(4 * c, 2 * c, 4, 2, 1));
    stack_.add(std::make_unique<BatchNorm2d>(2 * c));
    stack_.add(std::make_unique<LeakyReLU>(0.2));
    stack_.add(std::make_unique<Deconv2d>(2 * c, c, 4, 2, 1));
    stack_.add(std::make_unique<BatchNorm2d>(c));
    stack_.add(std::make_unique<LeakyReLU>(0.2));
    // last stage: no batch-norm, sigmoid keeps the output in [0,1]
    stack_.add(std::make_unique<Deconv2d>(c, 3, 4, 2, 1));
    stack_.add(std::make_unique<Sigmoid>());
}

Tensor Generator::encoder_features(const Tensor& x) {
    return stack_.forward_range(x, 0, fc_index_, Mode::Eval);
}

std::size_t Generator::bottleneck_dim() const {
    const std::size_t s8 = image_size_ / 8;
    return 4 * base_channels_ * s8 * s8;
}

Discriminator::Discriminator(std::size_t image_size, std::size_t base_channels)
    : image_size_(image_size), base_channels_(base_channels) {
    if (image_size < 8 || image_size % 8 != 0)
        throw ConfigError("discriminator image size must be a positive multiple of 8, got " +
                          std::to_string(image_size));
    if (base_channels < 1) throw ConfigError("discriminator base channels must be >= 1");
    const std::size_t c = base_channels;
    const std::size_t s8 = image_size / 8;

    stack_.add(std::make_unique<Conv2d>(3, c, 4, 2, 1));
    stack_.add(std::make_unique<LeakyReLU>(0.2));
    stack_.add(std::make_unique<Conv2d>(c, 2 * c, 4, 2, 1));
    stack_.add(std::make_unique<BatchNorm2d>(2 * c));
    stack_.add(std::make_unique<LeakyReLU>(0.2));
    stack_.add(std::make_unique<Conv2d>(2 * c, 4 * c, 4, 2, 1));
    stack_.add(std::make_unique<BatchNorm2d>(4 * c));
    stack_.add(std::make_unique<LeakyReLU>(0.2));
    stack_.add(std::make_unique<Flatten>());
    stack_.add(std::make_unique<Linear>(4 * c * s8 * s8, 1));
    stack_.add(std::make_unique<Sigmoid>());
}

Generator build_generator(std::size_t image_size, std::size_t base_channels) {
    return Generator(image_size, base_channels);
}

Discriminator build_discriminator(std::size_t image_size, std::size_t base_channels) {
    return Discriminator(image_size, base_channels);
}

// ------------------------------------------------------------------ losses

double pixel_loss(const Tensor& generated, const Tensor& real) {
    if (!generated.same_shape(real))
        throw ShapeError("pixel_loss: shape mismatch " + shape_str(generated) + " vs " +
                         shape_str(real));
    return sum_sq(sub(generated, real)) / static_cast<double>(generated.size());
}

Tensor pixel_loss_grad(const Tensor& generated, const Tensor& real) {
    if (!generated.same_shape(real))
        throw ShapeError("pixel_loss_grad: shape mismatch " + shape_str(generated) + " vs " +
                         shape_str(real));
    const double scale = 2.0 / static_cast<double>(generated.size());
    Tensor g(generated.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * (generated[i] - real[i]);
    return g;
}

double discriminator_loss(const Tensor& d_real, const Tensor& d_fake) {
    if (d_real.size() != d_fake.size())
        throw ShapeError("discriminator_loss: batch sizes disagree, " + shape_str(d_real) +
                         " vs " + shape_str(d_fake));
    const double n = static_cast<double>(d_real.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < d_real.size(); ++i)
        acc += std::log(clamp_unit(d_real[i])) + std::log(1.0 - clamp_unit(d_fake[i]));
    return acc / n;
}

double generator_adv_loss(const Tensor& d_fake, AdvSign sign) {
    const double n = static_cast<double>(d_fake.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < d_fake.size(); ++i) acc += std::log(clamp_unit(d_fake[i]));
    return sign == AdvSign::NonSaturating ? -acc / n : acc / n;
}

// ------------------------------------------------------------- train loop

StepMetrics train_step(Generator& g, Discriminator& d, const Tensor& stylized, const Tensor& real,
                       double lambda, OptimState& optim_g, OptimState& optim_d, AdvSign sign) {
    if (!stylized.same_shape(real))
        throw ShapeError("train_step: stylized batch " + shape_str(stylized) +
                         " does not match real batch " + shape_str(real));
    StepMetrics m;
    const std::size_t n = stylized.shape()[0];
    const double fn = static_cast<double>(n);

    // generator forward; caches stay armed through the discriminator passes
    Tensor generated = g.forward(stylized);
    require_finite(generated, "generator output");
    m.q = pixel_loss(generated, real);
    require_finite(m.q, "pixel loss");
    Tensor grad_generated = pixel_loss_grad(generated, real);

    // discriminator ascent; the generated batch is a detached input here
    d.stack().zero_grads();
    Tensor d_real = d.forward(real);
    require_finite(d_real, "discriminator output (real batch)");
    Tensor seed_real(d_real.shape());
    for (std::size_t i = 0; i < n; ++i) seed_real[i] = 1.0 / (fn * clamp_unit(d_real[i]));
    d.backward(seed_real);

    Tensor d_fake = d.forward(generated);
    require_finite(d_fake, "discriminator output (generated batch)");
    Tensor seed_fake(d_fake.shape());
    for (std::size_t i = 0; i < n; ++i) seed_fake[i] = -1.0 / (fn * (1.0 - clamp_unit(d_fake[i])));
    d.backward(seed_fake);

    m.f = discriminator_loss(d_real, d_fake);
    require_finite(m.f, "discriminator loss");
    for (std::size_t i = 0; i < n; ++i) {
        if (d_real[i] > 0.5) m.d_acc_real += 1.0;
        if (d_fake[i] < 0.5) m.d_acc_fake += 1.0;
    }
    m.d_acc_real /= fn;
    m.d_acc_fake /= fn;

    auto params_d = d.stack().parameters();
    rmsprop_ascend(params_d, optim_d);

    // generator descent on Q + lambda * adversarial term, via a fresh pass
    // through the updated discriminator
    d.stack().zero_grads();
    Tensor d_fake2 = d.forward(generated);
    require_finite(d_fake2, "discriminator output (adversarial pass)");
    m.adv = generator_adv_loss(d_fake2, sign);
    require_finite(m.adv, "generator adversarial loss");
    Tensor seed_adv(d_fake2.shape());
    const double adv_sign_factor = sign == AdvSign::NonSaturating ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i)
        seed_adv[i] = adv_sign_factor / (fn * clamp_unit(d_fake2[i]));
    Tensor grad_from_adv = d.backward(seed_adv);
    d.stack().zero_grads();  // those gradients belong to the generator update only

    g.stack().zero_grads();
    for (std::size_t i = 0; i < grad_generated.size(); ++i)
        grad_generated[i] += lambda * grad_from_adv[i];
    g.backward(grad_generated);
    auto params_g = g.stack().parameters();
    rmsprop_descend(params_g, optim_g);
    return m;
}

TrainState make_train_state(Generator& g, Discriminator& d, const TrainConfig& cfg) {
    TrainState state;
    auto params_g = g.stack().parameters();
    auto params_d = d.stack().parameters();
    state.optim_g = OptimState(params_g, cfg.alpha0, cfg.beta, cfg.eps);
    state.optim_d = OptimState(params_d, cfg.alpha0, cfg.beta, cfg.eps);
    return state;
}

TrainReport train(Generator& g, Discriminator& d, const PairDataset& dataset,
                  const TrainConfig& cfg, TrainState& state, const TrainHooks& hooks) {
    cfg.validate();
    if (dataset.records.empty()) throw ConfigError("training dataset is empty");
    if (dataset.image_size != cfg.image_size)
        throw ConfigError("dataset image size " + std::to_string(dataset.image_size) +
                          " does not match configured size " + std::to_string(cfg.image_size));

    TrainReport report;
    g.set_mode(Mode::Train);
    d.set_mode(Mode::Train);
    Batcher batcher(dataset, cfg.batch_size, derive_seed(cfg.seed, "shuffle"));

    for (std::size_t epoch = state.epochs_completed; epoch < cfg.epochs; ++epoch) {
        const double lambda = lambda_at(epoch, cfg.lambda0);
        const double alpha = alpha_at(epoch, cfg.alpha0);
        state.optim_g.set_alpha(alpha);
        state.optim_d.set_alpha(alpha);
        batcher.start_epoch(epoch);

        EpochStats es;
        es.epoch = epoch;
        es.lambda = lambda;
        es.alpha = alpha;
        double weight = 0.0;
        while (auto batch = batcher.next()) {
            const StepMetrics m = train_step(g, d, batch->stylized, batch->real, lambda,
                                             state.optim_g, state.optim_d, cfg.adv_sign);
            const double w = static_cast<double>(batch->count);
            es.mean_q += w * m.q;
            es.mean_f += w * m.f;
            es.mean_adv += w * m.adv;
            es.d_acc_real += w * m.d_acc_real;
            es.d_acc_fake += w * m.d_acc_fake;
            weight += w;
        }
        es.mean_q /= weight;
        es.mean_f /= weight;
        es.mean_adv /= weight;
        es.d_acc_real /= weight;
        es.d_acc_fake /= weight;
        report.epochs.push_back(es);
        state.epochs_completed = epoch + 1;
        if (hooks.on_epoch) hooks.on_epoch(es);
        if (hooks.on_checkpoint && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs)
            hooks.on_checkpoint(epoch + 1);
    }
    if (hooks.on_checkpoint) hooks.on_checkpoint(state.epochs_completed);
    return report;
}

// -------------------------------------------------------------- inference

Image destylize(Generator& g, const Image& input) {
    if (input.height() != g.image_size() || input.width() != g.image_size())
        throw ShapeError("destylize: input is " + std::to_string(input.width()) + "x" +
                         std::to_string(input.height()) + " but the model expects " +
                         std::to_string(g.image_size()) + "x" + std::to_string(g.image_size()));
    g.set_mode(Mode::Eval);
    const Tensor x = input.tensor().reshaped({1, 3, g.image_size(), g.image_size()});
    Tensor y = g.forward(x);
    return Image(y.reshaped({3, g.image_size(), g.image_size()}));
}

Tensor bottleneck_embedding(Generator& g, const Image& input) {
    if (input.height() != g.image_size() || input.width() != g.image_size())
        throw ShapeError("embedding: input is " + std::to_string(input.width()) + "x" +
                         std::to_string(input.height()) + " but the model expects " +
                         std::to_string(g.image_size()) + "x" + std::to_string(g.image_size()));
    const Tensor x = input.tensor().reshaped({1, 3, g.image_size(), g.image_size()});
    Tensor feats = g.encoder_features(x);
    return l2_normalized(feats.reshaped({feats.size()}));
}

// ------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[4] = {'F', 'D', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("truncated checkpoint");
    }
    std::uint32_t get_u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t get_u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    double get_f64() { return std::bit_cast<double>(get_u64()); }
    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

nlohmann::json config_json(const TrainConfig& cfg, const TrainState& state) {
    // checkpoint_path deliberately left out: checkpoints written by runs
    // that differ only in output location must be byte-identical
    nlohmann::json j = train_config_to_json(cfg);
    j["state"] = {{"epochs_completed", state.epochs_completed},
                  {"optim_g_iter", state.optim_g.iter()},
                  {"optim_d_iter", state.optim_d.iter()}};
    return j;
}

void parse_config_json(const std::string& text, TrainConfig& cfg, std::size_t& epochs_completed,
                       std::uint64_t& g_iter, std::uint64_t& d_iter) {
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        cfg = train_config_from_json(j);
        epochs_completed = j.at("state").at("epochs_completed").get<std::size_t>();
        g_iter = j.at("state").at("optim_g_iter").get<std::uint64_t>();
        d_iter = j.at("state").at("optim_d_iter").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed checkpoint config: ") + e.what());
    } catch (const ConfigError& e) {
        throw IoError(std::string("malformed checkpoint config: ") + e.what());
    }
}

struct NamedTensor {
    std::string name;
    Tensor* value;
};

std::vector<NamedTensor> checkpoint_registry(Generator& g, Discriminator& d, TrainState& state) {
    std::vector<NamedTensor> out;
    for (auto& t : g.stack().named_tensors()) out.push_back({"g." + t.name, t.value});
    for (auto& t : d.stack().named_tensors()) out.push_back({"d." + t.name, t.value});
    auto params_g = g.stack().parameters();
    for (std::size_t i = 0; i < params_g.size(); ++i)
        out.push_back({"optim_g." + params_g[i].name + ".delta", &state.optim_g.delta()[i]});
    auto params_d = d.stack().parameters();
    for (std::size_t i = 0; i < params_d.size(); ++i)
        out.push_back({"optim_d." + params_d[i].name + ".delta", &state.optim_d.delta()[i]});
    return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Generator& g, Discriminator& d,
                     TrainState& state, const TrainConfig& cfg) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    const std::string cfg_text = config_json(cfg, state).dump();
    put_u64(out, cfg_text.size());
    out += cfg_text;

    for (const auto& t : checkpoint_registry(g, d, state)) {
        put_u64(out, t.name.size());
        out += t.name;
        put_u64(out, t.value->rank());
        for (std::size_t dim : t.value->shape()) put_u64(out, dim);
        for (std::size_t i = 0; i < t.value->size(); ++i) put_f64(out, (*t.value)[i]);
    }

    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot write checkpoint " + path.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw IoError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open checkpoint " + path.string());
    std::string buf((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

    Reader r{buf};
    if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw IoError("bad magic in checkpoint " + path.string());
    r.pos = 4;
    const std::uint32_t version = r.get_u32();
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) + " (want " +
                      std::to_string(kVersion) + ")");
    const std::uint64_t cfg_len = r.get_u64();
    const std::string cfg_text = r.get_bytes(cfg_len);

    Checkpoint ck;
    std::size_t epochs_completed = 0;
    std::uint64_t g_iter = 0, d_iter = 0;
    parse_config_json(cfg_text, ck.config, epochs_completed, g_iter, d_iter);

    ck.generator = Generator(ck.config.image_size, ck.config.base_channels);
    ck.discriminator = Discriminator(ck.config.image_size, ck.config.base_channels);
    ck.state = make_train_state(ck.generator, ck.discriminator, ck.config);
    ck.state.epochs_completed = epochs_completed;
    ck.state.optim_g.set_iter(g_iter);
    ck.state.optim_d.set_iter(d_iter);

    for (const auto& expect : checkpoint_registry(ck.generator, ck.discriminator, ck.state)) {
        const std::uint64_t name_len = r.get_u64();
        const std::string name = r.get_bytes(name_len);
        if (name != expect.name)
            throw IoError("checkpoint tensor mismatch: want " + expect.name + ", found " + name);
        const std::uint64_t rank = r.get_u64();
        if (rank != expect.value->rank())
            throw IoError("checkpoint tensor " + name + " has rank " + std::to_string(rank) +
                          ", want " + std::to_string(expect.value->rank()));
        for (std::size_t i = 0; i < rank; ++i) {
            const std::uint64_t dim = r.get_u64();
            if (dim != expect.value->shape()[i])
                throw IoError("checkpoint tensor " + name + " dimension " + std::to_string(i) +
                              " is " + std::to_string(dim) + ", want " +
                              std::to_string(expect.value->shape()[i]));
        }
        for (std::size_t i = 0; i < expect.value->size(); ++i) (*expect.value)[i] = r.get_f64();
    }
    if (r.pos != buf.size()) throw IoError("trailing data in checkpoint " + path.string());
    return ck;
}

}  // namespace fdnn
