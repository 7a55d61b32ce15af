#include <doctest.h>

#include <cmath>

#include "fdnn/errors.hpp"
#include "fdnn/optim.hpp"

using namespace fdnn;

namespace {

struct ScalarParam {
    Tensor value{{1}};
    Tensor grad{{1}};
    std::vector<ParamRef> refs() { return {{"theta", &value, &grad}}; }
};

}  // namespace

TEST_CASE("zero gradient decays delta and leaves parameters unchanged") {
    ScalarParam p;
    p.value[0] = 3.5;
    auto refs = p.refs();
    OptimState state(refs, 0.001, 0.01, 1e-8);
    state.delta()[0][0] = 2.0;
    p.grad[0] = 0.0;
    rmsprop_ascend(refs, state);
    CHECK(state.delta()[0][0] == doctest::Approx(0.01 * 2.0).epsilon(1e-15));
    CHECK(p.value[0] == 3.5);
    rmsprop_descend(refs, state);
    CHECK(p.value[0] == 3.5);
    CHECK(state.iter() == 2);
}

TEST_CASE("ascend reproduces the hand-computed two-step trace") {
    ScalarParam p;
    p.value[0] = 1.0;
    auto refs = p.refs();
    OptimState state(refs, 0.001, 0.01, 1e-8);

    p.grad[0] = 2.0;
    rmsprop_ascend(refs, state);
    const double delta1 = 0.99 * 4.0;  // beta*0 + (1-beta)*g^2
    const double theta1 = 1.0 + 0.001 * 2.0 / std::sqrt(delta1 + 1e-8);
    CHECK(std::fabs(state.delta()[0][0] - delta1) <= 1e-12);
    CHECK(std::fabs(p.value[0] - theta1) <= 1e-12);
    CHECK(p.value[0] == doctest::Approx(1.00100504).epsilon(1e-8));

    rmsprop_ascend(refs, state);  // same gradient again
    const double delta2 = 0.01 * delta1 + 0.99 * 4.0;
    CHECK(std::fabs(state.delta()[0][0] - delta2) <= 1e-12);
    CHECK(std::fabs(delta2 - 3.9996) <= 1e-12);
}

TEST_CASE("descend reproduces the hand-computed trace") {
    ScalarParam p;
    p.value[0] = 1.0;
    auto refs = p.refs();
    OptimState state(refs, 0.001, 0.01, 1e-8);
    p.grad[0] = 2.0;
    rmsprop_descend(refs, state);
    const double theta1 = 1.0 - 0.001 * 2.0 / std::sqrt(0.99 * 4.0 + 1e-8);
    CHECK(std::fabs(p.value[0] - theta1) <= 1e-12);
    CHECK(p.value[0] == doctest::Approx(0.99899495).epsilon(1e-8));
}

TEST_CASE("descend mirrors ascend around the starting point") {
    for (double g : {0.37, -1.25, 8.0}) {
        ScalarParam pa, pd;
        pa.value[0] = pd.value[0] = 2.0;
        auto ra = pa.refs(), rd = pd.refs();
        OptimState sa(ra, 0.001, 0.01, 1e-8), sd(rd, 0.001, 0.01, 1e-8);
        pa.grad[0] = pd.grad[0] = g;
        rmsprop_ascend(ra, sa);
        rmsprop_descend(rd, sd);
        CHECK(std::fabs(pd.value[0] - (2.0 * 2.0 - pa.value[0])) <= 1e-15);
    }
}

TEST_CASE("delta stays nonnegative and the single-step move is bounded") {
    ScalarParam p;
    auto refs = p.refs();
    for (double g : {-50.0, -0.001, 0.0, 0.3, 1000.0}) {
        OptimState state(refs, 0.001, 0.01, 1e-8);
        p.value[0] = 0.0;
        p.grad[0] = g;
        rmsprop_descend(refs, state);
        CHECK(state.delta()[0][0] >= 0.0);
        // |step| <= alpha/sqrt(1-beta) when delta started at zero
        CHECK(std::fabs(p.value[0]) <= 0.001 / std::sqrt(0.99) + 1e-15);
    }
}

TEST_CASE("delta decays geometrically under zero gradients and stays nonnegative") {
    ScalarParam p;
    auto refs = p.refs();
    OptimState state(refs, 0.001, 0.01, 1e-8);
    state.delta()[0][0] = 4.0;
    p.grad[0] = 0.0;
    double prev = state.delta()[0][0];
    for (int i = 0; i < 12; ++i) {
        rmsprop_descend(refs, state);
        const double cur = state.delta()[0][0];
        CHECK(cur == doctest::Approx(0.01 * prev).epsilon(1e-15));
        CHECK(cur >= 0.0);
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("rmsprop rejects shape mismatches") {
    ScalarParam p;
    auto refs = p.refs();
    OptimState state(refs, 0.001, 0.01, 1e-8);
    Tensor bad({2});
    refs[0].grad = &bad;
    CHECK_THROWS_AS(rmsprop_ascend(refs, state), ShapeError);
    std::vector<ParamRef> extra = p.refs();
    extra.push_back(p.refs()[0]);
    CHECK_THROWS_AS(rmsprop_ascend(extra, state), ShapeError);
}

TEST_CASE("ascend on F equals descend on -F") {
    ScalarParam pa, pd;
    pa.value[0] = pd.value[0] = -0.75;
    auto ra = pa.refs(), rd = pd.refs();
    OptimState sa(ra, 0.001, 0.01, 1e-8), sd(rd, 0.001, 0.01, 1e-8);
    const double grads[] = {0.5, -2.0, 3.25, 0.0, -0.125};
    for (double g : grads) {
        pa.grad[0] = g;
        pd.grad[0] = -g;
        rmsprop_ascend(ra, sa);
        rmsprop_descend(rd, sd);
        CHECK(pa.value[0] == pd.value[0]);
        CHECK(sa.delta()[0][0] == sd.delta()[0][0]);
    }
}

TEST_CASE("lambda schedule follows the closed form with its floor") {
    CHECK(lambda_at(0) == 0.01);
    CHECK(std::fabs(lambda_at(1) - 0.00995) <= 1e-12);
    CHECK(lambda_at(200) == 0.005);
    // floor becomes active exactly at n = 139
    CHECK(lambda_at(138) > 0.005);
    CHECK(lambda_at(139) == 0.005);
    CHECK(std::fabs(lambda_at(138) - 0.01 * std::pow(0.995, 138)) <= 1e-15);
    double prev = lambda_at(0);
    for (std::size_t n = 1; n <= 300; ++n) {
        const double cur = lambda_at(n);
        CHECK(cur <= prev);
        CHECK(cur >= 0.005);
        CHECK(cur <= 0.01);
        prev = cur;
    }
}

TEST_CASE("alpha schedule is the exact closed form") {
    CHECK(alpha_at(0) == 0.001);
    CHECK(std::fabs(alpha_at(1) - 0.00099) <= 1e-12);
    CHECK(std::fabs(alpha_at(100) - 3.6603234127322950e-4) <= 1e-9);
    CHECK(std::fabs(alpha_at(100) - 0.001 * std::pow(0.99, 100)) <= 1e-18);
}
