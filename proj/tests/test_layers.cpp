#include <doctest.h>

#include <cmath>
#include <memory>

#include "fdnn/errors.hpp"
#include "fdnn/layers.hpp"
#include "fdnn/rng.hpp"
#include "fdnn/tensor.hpp"

using namespace fdnn;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// negative control: a leaky relu whose backward uses the wrong slope
class BrokenLeaky : public Layer {
public:
    Tensor forward(const Tensor& x, Mode mode) override {
        if (mode == Mode::Train) cached_ = x;
        Tensor y(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] >= 0 ? x[i] : 0.2 * x[i];
        return y;
    }
    Tensor backward(const Tensor& grad) override {
        Tensor g(grad.shape());
        for (std::size_t i = 0; i < grad.size(); ++i)
            g[i] = cached_[i] >= 0 ? grad[i] : 0.9 * grad[i];  // wrong slope
        return g;
    }
    std::string kind() const override { return "broken"; }

private:
    Tensor cached_;
};

}  // namespace

TEST_CASE("conv2d identity kernel") {
    Conv2d conv(1, 1, 1, 1, 0);
    conv.weight()[0] = 1.0;
    Rng rng(0);
    const Tensor x = random_tensor({2, 1, 3, 3}, rng);
    const Tensor y = conv.forward(x, Mode::Eval);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d all-ones 2x2 kernel on 1..9") {
    Conv2d conv(1, 1, 2, 1, 0);
    conv.weight().fill(1.0);
    const Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor y = conv.forward(x, Mode::Eval);
    CHECK(y.shape() == std::vector<std::size_t>{1, 1, 2, 2});
    CHECK(y[0] == 12.0);
    CHECK(y[1] == 16.0);
    CHECK(y[2] == 24.0);
    CHECK(y[3] == 28.0);
}

TEST_CASE("conv2d rejects bad geometry and channel counts") {
    Conv2d conv(2, 4, 3, 2, 0);
    CHECK_THROWS_AS(conv.forward(Tensor({1, 2, 6, 6}), Mode::Eval), ShapeError);
    CHECK_THROWS_AS(conv.forward(Tensor({1, 3, 7, 7}), Mode::Eval), ShapeError);
}

TEST_CASE("conv2d gradient check on random 2x3x5x5") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        LayerStack stack;
        auto conv = std::make_unique<Conv2d>(3, 2, 3, 1, 1);
        for (std::size_t i = 0; i < conv->weight().size(); ++i)
            conv->weight()[i] = rng.uniform(-0.5, 0.5);
        for (std::size_t i = 0; i < conv->bias().size(); ++i)
            conv->bias()[i] = rng.uniform(-0.2, 0.2);
        stack.add(std::move(conv));
        const Tensor x = random_tensor({2, 3, 5, 5}, rng);
        CHECK(grad_check(stack, x) < 1e-5);
    }
}

TEST_CASE("deconv2d scalar 1x1 kernel scales the input") {
    Deconv2d deconv(1, 1, 1, 1, 0);
    deconv.weight()[0] = 2.5;
    Rng rng(1);
    const Tensor x = random_tensor({1, 1, 4, 4}, rng);
    const Tensor y = deconv.forward(x, Mode::Eval);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(2.5 * x[i]).epsilon(1e-15));
}

TEST_CASE("deconv2d shape formula: 8x8, k4 s2 p1 -> 16x16") {
    Deconv2d deconv(2, 3, 4, 2, 1);
    const Tensor x({1, 2, 8, 8});
    const Tensor y = deconv.forward(x, Mode::Eval);
    CHECK(y.shape() == std::vector<std::size_t>{1, 3, 16, 16});
}

TEST_CASE("deconv2d forward is the adjoint of conv2d with a shared weight") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const std::size_t ci = 1 + rng.index(3), co = 1 + rng.index(3);
        const std::size_t k = 1 + rng.index(4);
        const std::size_t s = 1 + rng.index(2);
        const std::size_t p = rng.index(std::min<std::size_t>(k, 2));
        std::size_t h = k + s * (1 + rng.index(4)) - 2 * p;
        // keep conv geometry integral
        while ((h + 2 * p - k) % s != 0) ++h;

        Conv2d conv(ci, co, k, s, p);
        Deconv2d deconv(co, ci, k, s, p);
        for (std::size_t i = 0; i < conv.weight().size(); ++i) {
            const double w = rng.uniform(-1, 1);
            conv.weight()[i] = w;
            deconv.weight()[i] = w;  // same flat buffer layout
        }
        const Tensor x = random_tensor({1, ci, h, h}, rng);
        const Tensor cx = conv.forward(x, Mode::Eval);
        const Tensor y = random_tensor(cx.shape(), rng);
        const Tensor dy = deconv.forward(y, Mode::Eval);
        REQUIRE(dy.same_shape(x));
        const double lhs = dot(cx, y);
        const double rhs = dot(x, dy);
        const double denom = std::max({1.0, std::fabs(lhs), std::fabs(rhs)});
        CHECK(std::fabs(lhs - rhs) / denom <= 1e-9);
    }
}

TEST_CASE("deconv2d gradient check") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed + 100);
        LayerStack stack;
        auto deconv = std::make_unique<Deconv2d>(3, 2, 4, 2, 1);
        for (std::size_t i = 0; i < deconv->weight().size(); ++i)
            deconv->weight()[i] = rng.uniform(-0.5, 0.5);
        stack.add(std::move(deconv));
        const Tensor x = random_tensor({2, 3, 3, 3}, rng);
        CHECK(grad_check(stack, x) < 1e-5);
    }
}

TEST_CASE("linear identity and hand-computed case") {
    Linear ident(2, 2);
    ident.weight()[0] = 1;
    ident.weight()[3] = 1;
    const Tensor x({1, 2}, {3, 4});
    const Tensor y = ident.forward(x, Mode::Eval);
    CHECK(y[0] == 3.0);
    CHECK(y[1] == 4.0);

    Linear lin(2, 2);
    lin.weight() = Tensor({2, 2}, {1, 0, 1, 1});
    lin.bias() = Tensor({2}, {0, 1});
    const Tensor x2({1, 2}, {1, 2});
    const Tensor y2 = lin.forward(x2, Mode::Eval);
    CHECK(y2[0] == 1.0);
    CHECK(y2[1] == 4.0);
}

TEST_CASE("linear gradient check is near-exact") {
    Rng rng(5);
    LayerStack stack;
    auto lin = std::make_unique<Linear>(4, 3);
    for (std::size_t i = 0; i < lin->weight().size(); ++i) lin->weight()[i] = rng.uniform(-0.5, 0.5);
    for (std::size_t i = 0; i < lin->bias().size(); ++i) lin->bias()[i] = rng.uniform(-0.5, 0.5);
    stack.add(std::move(lin));
    const Tensor x = random_tensor({2, 4}, rng, -0.5, 0.5);
    CHECK(grad_check(stack, x) < 1e-9);
}

TEST_CASE("batchnorm constant channel maps to beta") {
    BatchNorm2d bn(2);
    std::vector<ParamRef> params;
    bn.collect_params("bn", params);
    *params[1].value = Tensor({2}, {0.3, -0.7});  // beta
    Tensor x({2, 2, 2, 2});
    x.fill(5.0);
    const Tensor y = bn.forward(x, Mode::Train);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t p = 0; p < 4; ++p)
                CHECK(y[(n * 2 + c) * 4 + p] == doctest::Approx(c == 0 ? 0.3 : -0.7).epsilon(1e-12));
}

TEST_CASE("batchnorm standardizes per channel in train mode") {
    Rng rng(9);
    BatchNorm2d bn(3);
    const Tensor x = random_tensor({4, 3, 5, 5}, rng);
    const Tensor y = bn.forward(x, Mode::Train);  // gamma 1, beta 0
    const std::size_t hw = 25, n = 4;
    const double eps_bn = 1e-5;
    for (std::size_t c = 0; c < 3; ++c) {
        // direct statistics oracle: recompute the standardization by hand
        double mean = 0, var = 0, out_mean = 0;
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t p = 0; p < hw; ++p) mean += x[(s * 3 + c) * hw + p];
        mean /= static_cast<double>(n * hw);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t p = 0; p < hw; ++p) {
                const double d = x[(s * 3 + c) * hw + p] - mean;
                var += d * d;
            }
        var /= static_cast<double>(n * hw);
        const double inv_std = 1.0 / std::sqrt(var + eps_bn);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t p = 0; p < hw; ++p) {
                const std::size_t i = (s * 3 + c) * hw + p;
                CHECK(std::fabs(y[i] - (x[i] - mean) * inv_std) <= 1e-8);
                out_mean += y[i];
            }
        out_mean /= static_cast<double>(n * hw);
        CHECK(std::fabs(out_mean) <= 1e-8);
        // variance lands at var/(var+eps), within eps_bn of 1
        double out_var = 0;
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t p = 0; p < hw; ++p) {
                const double d = y[(s * 3 + c) * hw + p] - out_mean;
                out_var += d * d;
            }
        out_var /= static_cast<double>(n * hw);
        CHECK(std::fabs(out_var - var / (var + eps_bn)) <= 1e-8);
    }
}

TEST_CASE("batchnorm train mode requires at least two values per channel") {
    BatchNorm2d bn(2);
    Tensor x({1, 2, 1, 1});
    CHECK_THROWS_AS(bn.forward(x, Mode::Train), DomainError);
}

TEST_CASE("batchnorm gradient check through train mode") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed + 40);
        LayerStack stack;
        auto bn = std::make_unique<BatchNorm2d>(2);
        std::vector<ParamRef> params;
        bn->collect_params("bn", params);
        for (std::size_t i = 0; i < params[0].value->size(); ++i)
            (*params[0].value)[i] = rng.uniform(0.5, 1.5);
        for (std::size_t i = 0; i < params[1].value->size(); ++i)
            (*params[1].value)[i] = rng.uniform(-0.5, 0.5);
        stack.add(std::move(bn));
        // weight the channels so the loss is not blind to normalization
        auto lin_mix = std::make_unique<Conv2d>(2, 2, 1, 1, 0);
        for (std::size_t i = 0; i < lin_mix->weight().size(); ++i)
            lin_mix->weight()[i] = rng.uniform(-1.0, 1.0);
        stack.add(std::move(lin_mix));
        const Tensor x = random_tensor({3, 2, 4, 4}, rng);
        CHECK(grad_check(stack, x) < 1e-4);
    }
}

TEST_CASE("eval-mode batchnorm is deterministic and affine") {
    Rng rng(13);
    BatchNorm2d bn(2);
    const Tensor warm = random_tensor({4, 2, 3, 3}, rng);
    bn.forward(warm, Mode::Train);  // move running stats off their defaults
    const Tensor x = random_tensor({2, 2, 3, 3}, rng);
    const Tensor y1 = bn.forward(x, Mode::Eval);
    const Tensor y2 = bn.forward(x, Mode::Eval);
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == y2[i]);
}

TEST_CASE("activation values") {
    LeakyReLU leaky(0.2);
    const Tensor x({4}, {-1.0, 0.0, 2.0, -0.5});
    const Tensor y = leaky.forward(x, Mode::Eval);
    CHECK(y[0] == doctest::Approx(-0.2).epsilon(1e-15));
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 2.0);
    CHECK(y[3] == doctest::Approx(-0.1).epsilon(1e-15));

    Sigmoid sig;
    CHECK(sig.forward(Tensor({1}, {0.0}), Mode::Eval)[0] == 0.5);
    Tanh th;
    CHECK(th.forward(Tensor({1}, {0.0}), Mode::Eval)[0] == 0.0);
}

TEST_CASE("leaky relu is positively homogeneous") {
    Rng rng(17);
    LeakyReLU leaky(0.2);
    const Tensor x = random_tensor({32}, rng, -3, 3);
    for (double c : {0.5, 2.0, 7.25}) {
        const Tensor cx = scale(x, c);
        const Tensor lhs = leaky.forward(cx, Mode::Eval);
        const Tensor rhs = scale(leaky.forward(x, Mode::Eval), c);
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(lhs[i] == doctest::Approx(rhs[i]).epsilon(1e-12));
    }
}

TEST_CASE("sigmoid stays strictly inside (0,1), tanh inside (-1,1)") {
    Sigmoid sig;
    Tanh th;
    // beyond |x| ~ 19 double rounding saturates tanh to exactly 1
    const Tensor x({7}, {-15, -5, -0.1, 0, 0.1, 5, 15});
    const Tensor s = sig.forward(x, Mode::Eval);
    const Tensor t = th.forward(x, Mode::Eval);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(s[i] > 0.0);
        CHECK(s[i] < 1.0);
        CHECK(t[i] > -1.0);
        CHECK(t[i] < 1.0);
    }
}

TEST_CASE("activation gradient checks away from the kink") {
    for (double sign : {-1.0, 1.0}) {
        Rng rng(sign > 0 ? 23u : 24u);
        Tensor x({16});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = sign * rng.uniform(0.1, 3.0);
        {
            LayerStack s;
            s.add(std::make_unique<LeakyReLU>(0.2));
            CHECK(grad_check(s, x) < 1e-6);
        }
        {
            LayerStack s;
            s.add(std::make_unique<Sigmoid>());
            CHECK(grad_check(s, x) < 1e-6);
        }
        {
            LayerStack s;
            s.add(std::make_unique<Tanh>());
            CHECK(grad_check(s, x) < 1e-6);
        }
    }
}

TEST_CASE("empty stack is the identity") {
    LayerStack stack;
    Rng rng(2);
    const Tensor x = random_tensor({3, 4}, rng);
    const Tensor y = stack.forward(x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
    const Tensor g = stack.backward(y);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(g[i] == x[i]);
}

TEST_CASE("stack backward without forward is a state error") {
    LayerStack stack;
    stack.add(std::make_unique<LeakyReLU>(0.2));
    CHECK_THROWS_AS(stack.backward(Tensor({1, 1})), StateError);

    // eval-mode forward does not arm backward either
    stack.set_mode(Mode::Eval);
    stack.forward(Tensor({2, 2}));
    CHECK_THROWS_AS(stack.backward(Tensor({2, 2})), StateError);
}

TEST_CASE("two forwards then one backward uses the latest cache") {
    LayerStack stack;
    stack.add(std::make_unique<LeakyReLU>(0.2));
    const Tensor x1({1, 2}, {-1.0, 1.0});
    const Tensor x2({1, 2}, {1.0, -1.0});
    stack.forward(x1);
    stack.forward(x2);
    Tensor seed({1, 2});
    seed.fill(1.0);
    const Tensor g = stack.backward(seed);
    CHECK(g[0] == 1.0);   // x2[0] >= 0
    CHECK(g[1] == 0.2);   // x2[1] < 0
}

TEST_CASE("three-layer toy stack passes the whole-stack gradient check") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed + 60);
        LayerStack stack;
        auto conv = std::make_unique<Conv2d>(2, 3, 3, 1, 1);
        for (std::size_t i = 0; i < conv->weight().size(); ++i)
            conv->weight()[i] = rng.uniform(-0.4, 0.4);
        stack.add(std::move(conv));
        stack.add(std::make_unique<LeakyReLU>(0.2));
        stack.add(std::make_unique<Flatten>());
        auto lin = std::make_unique<Linear>(3 * 4 * 4, 2);
        for (std::size_t i = 0; i < lin->weight().size(); ++i)
            lin->weight()[i] = rng.uniform(-0.3, 0.3);
        stack.add(std::move(lin));
        const Tensor x = random_tensor({2, 2, 4, 4}, rng);
        CHECK(grad_check(stack, x) < 1e-4);
    }
}

TEST_CASE("conv+leaky+linear gradient check meets the per-layer bar") {
    Rng rng(71);
    LayerStack stack;
    auto conv = std::make_unique<Conv2d>(1, 2, 3, 1, 0);
    for (std::size_t i = 0; i < conv->weight().size(); ++i) conv->weight()[i] = rng.uniform(-0.4, 0.4);
    stack.add(std::move(conv));
    stack.add(std::make_unique<LeakyReLU>(0.2));
    stack.add(std::make_unique<Flatten>());
    auto lin = std::make_unique<Linear>(2 * 3 * 3, 3);
    for (std::size_t i = 0; i < lin->weight().size(); ++i) lin->weight()[i] = rng.uniform(-0.4, 0.4);
    stack.add(std::move(lin));
    const Tensor x = random_tensor({1, 1, 5, 5}, rng);
    CHECK(grad_check(stack, x) < 1e-5);
}

TEST_CASE("grad_check flags a corrupted backward") {
    Rng rng(81);
    LayerStack stack;
    stack.add(std::make_unique<BrokenLeaky>());
    Tensor x({8});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-3.0, -0.5);  // negative branch
    CHECK(grad_check(stack, x) > 1e-2);
}

TEST_CASE("parameter registry enumerates in deterministic layer order") {
    LayerStack stack;
    stack.add(std::make_unique<Conv2d>(1, 2, 3, 1, 1));
    stack.add(std::make_unique<BatchNorm2d>(2));
    stack.add(std::make_unique<Linear>(4, 2));
    auto params = stack.parameters();
    REQUIRE(params.size() == 6);
    CHECK(params[0].name == "0.conv.weight");
    CHECK(params[1].name == "0.conv.bias");
    CHECK(params[2].name == "1.batchnorm.gamma");
    CHECK(params[3].name == "1.batchnorm.beta");
    CHECK(params[4].name == "2.linear.weight");
    CHECK(params[5].name == "2.linear.bias");
    for (auto& p : params) CHECK(p.value->same_shape(*p.grad));

    auto named = stack.named_tensors();
    REQUIRE(named.size() == 8);  // params plus the two running stats
    CHECK(named[4].name == "1.batchnorm.running_mean");
    CHECK(named[5].name == "1.batchnorm.running_var");
}
