#include <doctest.h>

#include <cmath>

#include "ddcm/optim.hpp"

using namespace ddcm;

namespace {

ParamList single_param(const TensorPtr& t, bool is_bias = false, bool decay = true) {
    return {{"p", t, is_bias, decay}};
}

} // namespace

TEST_CASE("zero gradients with zero decay leave parameters fixed") {
    auto p = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
    AdamAmsgrad opt(single_param(p), {});
    const auto before = p->data;
    for (int i = 0; i < 10; ++i) opt.step(0.01, 0.02);
    CHECK(p->data == before);
}

TEST_CASE("first step with unit gradient moves by about the learning rate") {
    auto p = Tensor::from({1}, {0.0}, true);
    AdamAmsgrad opt(single_param(p), {});
    p->grad[0] = 1.0;
    opt.step(0.05, 0.1);
    // bias-corrected first step: update = lr * 1 / (1 + eps)
    CHECK(p->data[0] == doctest::Approx(-0.05).epsilon(1e-6));
}

TEST_CASE("the max-tracked second moment never decreases") {
    auto p = Tensor::from({4}, {0.1, 0.2, 0.3, 0.4}, true);
    AdamAmsgrad opt(single_param(p), {});
    RngState rng(50);
    std::vector<double> prev_vmax(4, 0.0);
    for (int step = 0; step < 100; ++step) {
        for (auto& g : p->grad) g = rng.normal(0.0, 2.0);
        opt.step(1e-3, 2e-3);
        auto state = opt.state();
        const auto& vmax = *state[2].values; // m, v, vmax
        for (int i = 0; i < 4; ++i) {
            CHECK(vmax[i] >= prev_vmax[i]);
            prev_vmax[i] = vmax[i];
        }
        p->zero_grad();
    }
}

TEST_CASE("500 steps on the quadratic reduce it by 99 percent") {
    auto x = Tensor::from({2}, {5.0, -3.0}, true);
    AdamAmsgrad opt(single_param(x), {});
    const double f0 = 5.0 * 5.0 + 3.0 * 3.0;
    for (int i = 0; i < 500; ++i) {
        x->zero_grad();
        x->grad[0] = 2.0 * x->data[0];
        x->grad[1] = 2.0 * x->data[1];
        opt.step(0.05, 0.1);
    }
    const double f = x->data[0] * x->data[0] + x->data[1] * x->data[1];
    CHECK(f <= 0.01 * f0);
}

TEST_CASE("lr schedule reproduces the published policy") {
    LrSchedule s;
    CHECK(s.lr_at(0, false) == 0.00012);
    CHECK(s.lr_at(4, false) == 0.00012);
    CHECK(s.lr_at(5, false) == 0.00006);
    CHECK(s.lr_at(25, false) == 1.5e-5);
    CHECK(s.lr_at(0, true) == 0.00024);

    // non-increasing with exactly |milestones| drops over 101 epochs
    int drops = 0;
    double prev = s.lr_at(0, false);
    for (int e = 1; e <= 101; ++e) {
        const double lr = s.lr_at(e, false);
        CHECK(lr <= prev);
        if (lr < prev) ++drops;
        CHECK(s.lr_at(e, true) == 2.0 * lr);
        prev = lr;
    }
    CHECK(drops == 5);

    CHECK_THROWS_AS(s.lr_at(-1, false), Error);
}

TEST_CASE("coupled decay shrinks parameters under zero gradients") {
    auto p = Tensor::from({2}, {1.0, -1.0}, true);
    AdamConfig cfg;
    cfg.weight_decay = 5e-5;
    AdamAmsgrad opt(single_param(p), cfg);
    double prev = std::hypot(p->data[0], p->data[1]);
    for (int i = 0; i < 50; ++i) {
        opt.step(1e-3, 2e-3);
        const double norm = std::hypot(p->data[0], p->data[1]);
        CHECK(norm < prev);
        prev = norm;
    }
}

TEST_CASE("bias parameters skip decay and use the bias rate") {
    auto w = Tensor::from({1}, {1.0}, true);
    auto b = Tensor::from({1}, {1.0}, true);
    AdamConfig cfg;
    cfg.weight_decay = 1e-2;
    AdamAmsgrad opt({{"w", w, false, true}, {"b", b, true, false}}, cfg);
    opt.step(1e-3, 2e-3);
    CHECK(w->data[0] < 1.0); // decayed
    CHECK(b->data[0] == 1.0); // no decay, no gradient
}

TEST_CASE("non-finite gradients are rejected with the parameter name") {
    auto p = Tensor::from({1}, {0.0}, true);
    ParamList params{{"low_ddcm.block0.conv.w", p, false, true}};
    AdamAmsgrad opt(params, {});
    p->grad[0] = std::nan("");
    CHECK_THROWS_WITH_AS(opt.step(1e-3, 2e-3), doctest::Contains("low_ddcm.block0.conv.w"),
                         Error);
}
