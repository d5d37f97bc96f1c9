#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "ddcm/arch.hpp"
#include "ddcm/checkpoint.hpp"
#include "ddcm/gradcheck.hpp"
#include "ddcm/optim.hpp"

using namespace ddcm;

namespace {

std::int64_t bottleneck_params_oracle(int in, int mid, int out, int stride) {
    std::int64_t p = 0;
    p += static_cast<std::int64_t>(in) * mid + 2 * mid; // 1x1 + bn
    p += 9LL * mid * mid + 2 * mid;                     // 3x3 + bn
    p += static_cast<std::int64_t>(mid) * out + 2 * out;
    if (in != out || stride != 1) p += static_cast<std::int64_t>(in) * out + 2 * out;
    return p;
}

std::int64_t backbone_params_oracle(int in_ch, int width, const std::vector<int>& blocks,
                                    const std::vector<int>& strides) {
    std::int64_t p = 49LL * in_ch * width + 2 * width; // stem + bn
    int ch = width;
    for (std::size_t s = 0; s < blocks.size(); ++s) {
        const int mid = width << s;
        const int out = 4 * mid;
        for (int i = 0; i < blocks[s]; ++i) {
            p += bottleneck_params_oracle(ch, mid, out, i == 0 ? strides[s] : 1);
            ch = out;
        }
    }
    return p;
}

void make_linear_mode(DDCMModule& m) {
    // BN frozen to identity scaling, PReLU to the identity, conv weights
    // one: impulse responses stay nonnegative, so supports only grow
    for (auto& blk : m.blocks) {
        blk.bn.state.training = false;
        for (auto& v : blk.conv.w->data) v = 1.0;
        for (auto& v : blk.conv.b->data) v = 0.0;
        blk.act.slope->data[0] = 1.0;
    }
    m.merge_bn.state.training = false;
    for (auto& v : m.merge.w->data) v = 1.0;
    m.merge_act.slope->data[0] = 1.0;
}

} // namespace

TEST_CASE("DCs block grows channels by g at unchanged spatial size") {
    RngState rng(1);
    DCsBlock blk({2, 4, 3, 3}, rng);
    auto x = Tensor::zeros({1, 2, 16, 16});
    auto y = blk.forward(nullptr, x);
    CHECK(y->shape == std::vector<int>{1, 6, 16, 16});
}

TEST_CASE("chained DCs blocks accumulate c0 + N*g channels") {
    RngState rng(2);
    DDCMModule m(3, {{1, 2, 3, 5}, 5, 7, 3}, rng);
    CHECK(m.stack_channels() == 3 + 4 * 5);
    CHECK(m.merge.spec.in_channels == 23);
    auto x = Tensor::zeros({1, 3, 16, 16});
    auto y = m.forward(nullptr, x);
    CHECK(y->shape == std::vector<int>{1, 7, 16, 16});
}

TEST_CASE("DDCM output spatial size equals the input for the default rate list") {
    RngState rng(3);
    DDCMModule m(2, {{1, 2, 3, 5, 7, 9}, 4, 8, 3}, rng);
    auto x = Tensor::zeros({1, 2, 32, 32});
    CHECK(m.forward(nullptr, x)->shape == std::vector<int>{1, 8, 32, 32});

    // stacked receptive extents of the blocks
    std::vector<int> extents;
    for (const auto& blk : m.blocks) extents.push_back(blk.conv.spec.effective_extent());
    CHECK(extents == std::vector<int>{3, 5, 7, 11, 15, 19});
}

TEST_CASE("single-rate DDCM with selector merge reproduces conv-BN-PReLU") {
    RngState rng(4);
    DDCMModule m(2, {{1}, 3, 3, 3}, rng);
    // merge selects the conv-path channels (first 3 of the 5-channel stack)
    for (auto& v : m.merge.w->data) v = 0.0;
    for (int o = 0; o < 3; ++o) m.merge.w->data[static_cast<std::size_t>(o) * 5 + o] = 1.0;
    m.merge_bn.state.training = false; // identity running stats
    m.merge_act.slope->data[0] = 1.0;

    RngState xr(5);
    auto x = Tensor::uniform({1, 2, 8, 8}, xr, 0.0, 1.0, false);
    auto got = m.forward(nullptr, x);

    auto& blk = m.blocks[0];
    auto direct = blk.conv.forward(nullptr, x);
    direct = blk.act.forward(nullptr, direct);
    direct = blk.bn.forward(nullptr, direct);
    direct = bilinear_upsample(nullptr, direct, 8, 8);

    REQUIRE(got->shape == direct->shape);
    for (std::size_t i = 0; i < got->data.size(); ++i)
        CHECK(got->data[i] == doctest::Approx(direct->data[i]).epsilon(1e-4));
}

TEST_CASE("DDCM impulse support stays within the resampling-aware bounds") {
    RngState rng(6);
    DDCMModule m(1, {{1, 2, 3, 5, 7, 9}, 1, 1, 3}, rng);
    make_linear_mode(m);

    const int size = 96;
    auto x = Tensor::zeros({1, 1, size, size});
    x->data[static_cast<std::size_t>(size / 2) * size + size / 2] = 1.0;
    auto y = m.forward(nullptr, x);

    int lo = size, hi = -1;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j)
            if (std::fabs(y->data[static_cast<std::size_t>(i) * size + j]) > 1e-12) {
                lo = std::min(lo, i);
                hi = std::max(hi, i);
            }
    const int support = hi - lo + 1;
    // largest single-block extent for k=3, r=9
    CHECK(support >= 19);
    // each stride-2 block plus its upsample can widen the response by at
    // most extent+3, so the stack is bounded by 1 + sum(extent_i + 3)
    CHECK(support <= 1 + (3 + 5 + 7 + 11 + 15 + 19) + 3 * 6);
}

TEST_CASE("backbone produces the canonical truncated geometry") {
    RngState rng(7);
    NetworkConfig cfg; // default: width 64, blocks {3,4,6}, strides {1,2,2}
    Backbone bb(3, cfg.backbone_width, cfg.backbone_blocks, cfg.backbone_strides, cfg.stem_pool,
                rng);
    CHECK(bb.out_channels == 1024);
    CHECK(bb.out_stride == 16);

    auto x = Tensor::zeros({1, 3, 64, 64});
    auto y = bb.forward(nullptr, x);
    CHECK(y->shape == std::vector<int>{1, 1024, 4, 4});
    for (double v : y->data) CHECK(std::isfinite(v));
}

TEST_CASE("backbone parameter count matches the closed-form oracle exactly") {
    RngState rng(8);
    JtDdcmNet net(NetworkConfig{}, rng);
    std::int64_t got = 0;
    for (const auto& p : net.params())
        if (p.name.rfind("backbone.", 0) == 0) got += p.tensor->numel();
    CHECK(got == backbone_params_oracle(3, 64, {3, 4, 6}, {1, 2, 2}));

    RngState rng2(9);
    JtDdcmNet tiny(NetworkConfig::tiny(), rng2);
    std::int64_t got_tiny = 0;
    for (const auto& p : tiny.params())
        if (p.name.rfind("backbone.", 0) == 0) got_tiny += p.tensor->numel();
    CHECK(got_tiny == backbone_params_oracle(3, 2, {1}, {2}));
}

TEST_CASE("joint-task forward yields the contracted head shapes") {
    RngState rng(10);
    JtDdcmNet net(NetworkConfig{}, rng);
    net.set_training(false);
    RngState xr(11);
    auto x = Tensor::uniform({2, 64, 64}, xr, 0.0, 1.0, false);
    auto out = net.forward_single(nullptr, x);
    CHECK(out.full_seg->shape == std::vector<int>{4, 64, 64});
    CHECK(out.binary_seg->shape == std::vector<int>{1, 64, 64});
    CHECK(out.presence->shape == std::vector<int>{3});
}

TEST_CASE("head toggles suppress the auxiliary outputs") {
    auto cfg = NetworkConfig::tiny();
    cfg.head_binary = false;
    cfg.head_presence = false;
    RngState rng(12);
    JtDdcmNet net(cfg, rng);
    auto x = Tensor::zeros({1, 2, 16, 16});
    auto out = net.forward(nullptr, x);
    CHECK(out.full_seg != nullptr);
    CHECK(out.binary_seg == nullptr);
    CHECK(out.presence == nullptr);
}

TEST_CASE("inputs must be multiples of the config divisor") {
    RngState rng(13);
    JtDdcmNet net(NetworkConfig{}, rng);
    CHECK(net.cfg.required_divisor() == 32);
    auto x = Tensor::zeros({1, 2, 60, 60});
    CHECK_THROWS_WITH_AS(net.forward(nullptr, x), doctest::Contains("multiple of 32"), Error);

    CHECK(NetworkConfig::tiny().required_divisor() == 8);
}

TEST_CASE("tiny end-to-end gradcheck passes at rtol 1e-3") {
    auto cfg = NetworkConfig::tiny();
    RngState rng(14);
    auto net = std::make_shared<JtDdcmNet>(cfg, rng);
    RngState pr(15);
    // batch of two 8x8 inputs so train-mode BN has enough samples at the
    // deepest 1x1 feature maps
    auto r_full = Tensor::uniform({2, 4, 8, 8}, pr, 0.25, 1.0, false);
    auto r_bin = Tensor::uniform({2, 1, 8, 8}, pr, 0.25, 1.0, false);
    auto r_pres = Tensor::uniform({2, 3}, pr, 0.25, 1.0, false);

    RngState xr(16);
    auto x = Tensor::uniform({2, 2, 8, 8}, xr, 0.0, 1.0, false);
    auto rep = gradcheck(
        [net, r_full, r_bin, r_pres](Tape& t, const TensorPtr& v) {
            auto out = net->forward(&t, v);
            auto loss = sum(&t, mul(&t, out.full_seg, r_full));
            loss = add(&t, loss, sum(&t, mul(&t, out.binary_seg, r_bin)));
            return add(&t, loss, sum(&t, mul(&t, out.presence, r_pres)));
        },
        x, 1e-3);
    CHECK(rep.pass);
}

TEST_CASE("band expansion learns the missing band and passes gradients") {
    RngState rng(17);
    BandExpand be(2, rng);
    CHECK(be.active);
    auto x = Tensor::from({1, 2, 8, 8}, std::vector<double>(128, 0.5), false);
    auto y = be.forward(nullptr, x);
    CHECK(y->shape == std::vector<int>{1, 3, 8, 8});

    Tape t;
    auto xg = Tensor::from({1, 2, 8, 8}, std::vector<double>(128, 0.5), true);
    RngState pr(18);
    auto proj = Tensor::uniform({1, 3, 8, 8}, pr, 0.5, 1.0, false);
    t.backward(sum(&t, mul(&t, be.forward(&t, xg), proj)));
    double norm = 0.0;
    for (double g : be.conv.w->grad) norm += g * g;
    CHECK(norm > 0.0);

    BandExpand pass(3, rng);
    CHECK_FALSE(pass.active);
    auto x3 = Tensor::zeros({1, 3, 8, 8});
    CHECK(pass.forward(nullptr, x3).get() == x3.get());
}

TEST_CASE("summarize counts single conv layers like the worked examples") {
    RngState rng(19);
    ConvLayer one_by_one({4, 8, 1, 1, 1, 0, true}, rng);
    CHECK(one_by_one.w->numel() + one_by_one.b->numel() == 40);
    ConvLayer three({2, 4, 3, 1, 1, 1, true}, rng);
    CHECK(three.w->numel() + three.b->numel() == 76);
}

TEST_CASE("summary totals agree with parameter traversal") {
    NetworkConfig cfg;
    auto s = summarize(cfg, 256, 256);
    RngState rng(20);
    JtDdcmNet net(cfg, rng);
    CHECK(s.total_params == net.param_count());
    CHECK(s.total_macs > 0.0);
    // MAC formula applied to the seg head alone: (256/4)^2 * 1 * 1 * in * out
    for (const auto& row : s.rows)
        if (row.component == "seg_head")
            CHECK(row.macs == doctest::Approx(64.0 * 64.0 * (36 + 36) * 4.0));
}

TEST_CASE("checkpoints restore parameters, buffers and optimizer state exactly") {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() / "ddcm_test_ckpt.bin").string();
    const auto cfg = NetworkConfig::tiny();
    const std::string echo = "tiny-echo-v1";

    RngState ra(21);
    JtDdcmNet a(cfg, ra);
    AdamConfig ac;
    ac.weight_decay = 5e-5;
    AdamAmsgrad opt_a(a.params(), ac);

    // take a couple of optimizer steps so moments are nonzero
    RngState gr(22);
    for (int step = 0; step < 3; ++step) {
        for (auto& p : a.params())
            for (auto& g : p.tensor->grad) g = gr.uniform(-1.0, 1.0);
        opt_a.step(1e-3, 2e-3);
        for (auto& p : a.params()) p.tensor->zero_grad();
    }
    // nudge the running stats away from their init
    a.low_ddcm.merge_bn.state.running_mean[0] = 0.25;
    save_network_checkpoint(path, a, &opt_a, echo);

    RngState rb(23);
    JtDdcmNet b(cfg, rb);
    AdamAmsgrad opt_b(b.params(), ac);
    load_network_checkpoint(path, b, &opt_b, echo);

    auto pa = a.params();
    auto pb = b.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].tensor->data == pb[i].tensor->data);
    CHECK(b.low_ddcm.merge_bn.state.running_mean[0] == 0.25);
    CHECK(opt_b.step_count() == 3);

    CHECK_THROWS_WITH_AS(load_network_checkpoint(path, b, nullptr, "other-echo"),
                         doctest::Contains("config echo"), Error);
    fs::remove(path);
}
