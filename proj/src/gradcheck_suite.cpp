#include <cmath>

#include "ddcm/gradcheck.hpp"
#include "ddcm/losses.hpp"
#include "ddcm/nn.hpp"

namespace ddcm {

namespace {

// scalar projection with fixed coefficients so no gradient entry cancels
TensorPtr project(Tape& tape, const TensorPtr& t, RngState& rng) {
    RngState local = rng.fork(99);
    auto r = Tensor::uniform(t->shape, local, 0.25, 1.0, false);
    return sum(&tape, mul(&tape, t, r));
}

// avoids the PReLU/ReLU kink: magnitudes in [0.1, 2] with random sign
TensorPtr signed_away_from_zero(std::vector<int> shape, RngState& rng) {
    auto t = Tensor::uniform(std::move(shape), rng, 0.1, 2.0, false);
    for (auto& v : t->data)
        if (rng.bernoulli()) v = -v;
    return t;
}

struct Case {
    ScalarFn f;
    TensorPtr x;
    double rtol = 1e-4;
};

using CaseFactory = Case (*)(RngState&);

Case case_ew_mul(RngState& rng) {
    auto y = Tensor::uniform({3, 4}, rng, -2.0, 2.0, false);
    auto x = Tensor::uniform({3, 4}, rng, -2.0, 2.0, false);
    return {[y](Tape& t, const TensorPtr& v) {
                return sum(&t, add(&t, mul(&t, v, v), mul(&t, v, y)));
            },
            x};
}

Case case_ew_div(RngState& rng) {
    auto num = Tensor::uniform({3, 4}, rng, 0.5, 2.0, false);
    auto x = Tensor::uniform({3, 4}, rng, 0.5, 2.5, false);
    return {[num](Tape& t, const TensorPtr& v) { return sum(&t, div(&t, num, v)); }, x};
}

Case case_ew_exp(RngState& rng) {
    auto x = Tensor::uniform({3, 4}, rng, -1.0, 1.0, false);
    return {[](Tape& t, const TensorPtr& v) { return sum(&t, exp_(&t, v)); }, x};
}

Case case_ew_log(RngState& rng) {
    auto x = Tensor::uniform({3, 4}, rng, 0.5, 2.5, false);
    return {[](Tape& t, const TensorPtr& v) { return sum(&t, log_(&t, v)); }, x};
}

Case case_ew_max(RngState& rng) {
    auto y = Tensor::uniform({3, 4}, rng, -2.0, 2.0, false);
    auto x = Tensor::uniform({3, 4}, rng, -2.0, 2.0, false);
    return {[y](Tape& t, const TensorPtr& v) { return sum(&t, emax(&t, v, y)); }, x};
}

Case case_sigmoid(RngState& rng) {
    auto x = Tensor::uniform({2, 5}, rng, -3.0, 3.0, false);
    return {[](Tape& t, const TensorPtr& v) { return sum(&t, mul(&t, sigmoid(&t, v), sigmoid(&t, v))); },
            x};
}

Case case_softmax(RngState& rng) {
    auto x = Tensor::uniform({2, 4, 3, 3}, rng, -2.0, 2.0, false);
    RngState r2 = rng.fork(7);
    auto proj = Tensor::uniform(x->shape, r2, 0.25, 1.0, false);
    return {[proj](Tape& t, const TensorPtr& v) {
                return sum(&t, mul(&t, softmax(&t, v, 1), proj));
            },
            x};
}

ConvSpec suite_conv_spec() {
    ConvSpec s;
    s.in_channels = 2;
    s.out_channels = 3;
    s.kernel = 3;
    s.stride = 2;
    s.dilation = 2;
    s.padding = 2;
    s.bias = true;
    return s;
}

Case case_conv_x(RngState& rng) {
    const auto spec = suite_conv_spec();
    auto w = Tensor::uniform({3, 2, 3, 3}, rng, -1.0, 1.0, false);
    auto b = Tensor::uniform({3}, rng, -0.5, 0.5, false);
    auto x = Tensor::uniform({2, 2, 7, 7}, rng, -2.0, 2.0, false);
    RngState pr = rng.fork(5);
    return {[spec, w, b, pr](Tape& t, const TensorPtr& v) mutable {
                return project(t, conv2d(&t, v, spec, w, b), pr);
            },
            x};
}

Case case_conv_w(RngState& rng) {
    const auto spec = suite_conv_spec();
    auto x = Tensor::uniform({2, 2, 7, 7}, rng, -2.0, 2.0, false);
    auto b = Tensor::uniform({3}, rng, -0.5, 0.5, false);
    auto w = Tensor::uniform({3, 2, 3, 3}, rng, -1.0, 1.0, false);
    RngState pr = rng.fork(5);
    return {[spec, x, b, pr](Tape& t, const TensorPtr& v) mutable {
                return project(t, conv2d(&t, x, spec, v, b), pr);
            },
            w};
}

Case case_conv_b(RngState& rng) {
    const auto spec = suite_conv_spec();
    auto x = Tensor::uniform({2, 2, 7, 7}, rng, -2.0, 2.0, false);
    auto w = Tensor::uniform({3, 2, 3, 3}, rng, -1.0, 1.0, false);
    auto b = Tensor::uniform({3}, rng, -0.5, 0.5, false);
    RngState pr = rng.fork(5);
    return {[spec, x, w, pr](Tape& t, const TensorPtr& v) mutable {
                return project(t, conv2d(&t, x, spec, w, v), pr);
            },
            b};
}

Case case_prelu_x(RngState& rng) {
    auto a = Tensor::scalar(0.25, false);
    auto x = signed_away_from_zero({2, 3, 4, 4}, rng);
    RngState pr = rng.fork(5);
    return {[a, pr](Tape& t, const TensorPtr& v) mutable { return project(t, prelu(&t, v, a), pr); },
            x};
}

Case case_prelu_a(RngState& rng) {
    auto x = signed_away_from_zero({2, 3, 4, 4}, rng);
    auto a = Tensor::uniform({1}, rng, 0.1, 0.5, false);
    RngState pr = rng.fork(5);
    return {[x, pr](Tape& t, const TensorPtr& v) mutable { return project(t, prelu(&t, x, v), pr); },
            a};
}

struct BnFixture {
    TensorPtr x, gamma, beta;
};

BnFixture bn_fixture(RngState& rng) {
    BnFixture f;
    f.x = Tensor::uniform({2, 3, 4, 4}, rng, -2.0, 2.0, false);
    f.gamma = Tensor::uniform({3}, rng, 0.5, 1.5, false);
    f.beta = Tensor::uniform({3}, rng, -0.5, 0.5, false);
    return f;
}

TensorPtr bn_apply(Tape& t, const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                   RngState pr) {
    BatchNormState st(x->dim(1));
    st.gamma = gamma;
    st.beta = beta;
    auto y = batch_norm(&t, x, st);
    RngState local = pr.fork(99);
    auto r = Tensor::uniform(y->shape, local, 0.25, 1.0, false);
    return sum(&t, mul(&t, y, r));
}

Case case_bn_x(RngState& rng) {
    auto f = bn_fixture(rng);
    RngState pr = rng.fork(5);
    return {[f, pr](Tape& t, const TensorPtr& v) { return bn_apply(t, v, f.gamma, f.beta, pr); },
            f.x};
}

Case case_bn_gamma(RngState& rng) {
    auto f = bn_fixture(rng);
    RngState pr = rng.fork(5);
    return {[f, pr](Tape& t, const TensorPtr& v) { return bn_apply(t, f.x, v, f.beta, pr); },
            f.gamma};
}

Case case_bn_beta(RngState& rng) {
    auto f = bn_fixture(rng);
    RngState pr = rng.fork(5);
    return {[f, pr](Tape& t, const TensorPtr& v) { return bn_apply(t, f.x, f.gamma, v, pr); },
            f.beta};
}

Case case_upsample(RngState& rng) {
    auto x = Tensor::uniform({1, 2, 4, 5}, rng, -2.0, 2.0, false);
    RngState pr = rng.fork(5);
    return {[pr](Tape& t, const TensorPtr& v) mutable {
                return project(t, bilinear_upsample(&t, v, 7, 9), pr);
            },
            x};
}

Case case_maxpool(RngState& rng) {
    auto x = Tensor::uniform({1, 2, 6, 6}, rng, -2.0, 2.0, false);
    RngState pr = rng.fork(5);
    return {[pr](Tape& t, const TensorPtr& v) mutable { return project(t, max_pool2(&t, v), pr); },
            x};
}

Case case_avgpool(RngState& rng) {
    auto x = Tensor::uniform({2, 3, 5, 5}, rng, -2.0, 2.0, false);
    RngState pr = rng.fork(5);
    return {[pr](Tape& t, const TensorPtr& v) mutable {
                return project(t, adaptive_avg_pool1(&t, v), pr);
            },
            x};
}

Case case_linear_x(RngState& rng) {
    auto w = Tensor::uniform({4, 6}, rng, -1.0, 1.0, false);
    auto b = Tensor::uniform({4}, rng, -0.5, 0.5, false);
    auto x = Tensor::uniform({3, 6}, rng, -2.0, 2.0, false);
    RngState pr = rng.fork(5);
    return {[w, b, pr](Tape& t, const TensorPtr& v) mutable {
                return project(t, linear(&t, v, w, b), pr);
            },
            x};
}

Case case_linear_w(RngState& rng) {
    auto x = Tensor::uniform({3, 6}, rng, -2.0, 2.0, false);
    auto b = Tensor::uniform({4}, rng, -0.5, 0.5, false);
    auto w = Tensor::uniform({4, 6}, rng, -1.0, 1.0, false);
    RngState pr = rng.fork(5);
    return {[x, b, pr](Tape& t, const TensorPtr& v) mutable {
                return project(t, linear(&t, x, v, b), pr);
            },
            w};
}

std::vector<std::uint8_t> random_labels(std::int64_t n, int k, RngState& rng) {
    std::vector<std::uint8_t> out(n);
    for (auto& v : out) v = static_cast<std::uint8_t>(rng.next_below(k));
    return out;
}

Case case_weighted_ce(RngState& rng) {
    const int K = 4;
    auto logits = Tensor::uniform({2, K, 3, 3}, rng, -2.0, 2.0, false);
    auto target = random_labels(2 * 3 * 3, K, rng);
    ClassWeights w;
    w.weights.resize(K);
    for (auto& v : w.weights) v = rng.uniform(0.25, 2.0);
    w.frequencies.assign(K, 1.0);
    return {[target, w](Tape& t, const TensorPtr& v) {
                return weighted_cross_entropy(&t, v, target, w);
            },
            logits};
}

Case case_bce(RngState& rng) {
    auto logits = Tensor::uniform({2, 1, 4, 4}, rng, -3.0, 3.0, false);
    std::vector<double> target(logits->numel());
    for (auto& v : target) v = rng.bernoulli() ? 1.0 : 0.0;
    return {[target](Tape& t, const TensorPtr& v) { return binary_cross_entropy(&t, v, target); },
            logits};
}

Case case_lovasz(RngState& rng) {
    const int K = 3;
    auto logits = Tensor::uniform({1, K, 4, 4}, rng, -2.0, 2.0, false);
    auto target = random_labels(4 * 4, K, rng);
    return {[target](Tape& t, const TensorPtr& v) {
                return lovasz_softmax(&t, softmax(&t, v, 1), target);
            },
            logits};
}

struct SuiteEntry {
    const char* name;
    CaseFactory factory;
};

constexpr SuiteEntry kSuite[] = {
    {"elementwise.mul", case_ew_mul},
    {"elementwise.div", case_ew_div},
    {"elementwise.exp", case_ew_exp},
    {"elementwise.log", case_ew_log},
    {"elementwise.max", case_ew_max},
    {"sigmoid", case_sigmoid},
    {"softmax", case_softmax},
    {"conv2d.input", case_conv_x},
    {"conv2d.weights", case_conv_w},
    {"conv2d.bias", case_conv_b},
    {"prelu.input", case_prelu_x},
    {"prelu.slope", case_prelu_a},
    {"batch_norm.input", case_bn_x},
    {"batch_norm.gamma", case_bn_gamma},
    {"batch_norm.beta", case_bn_beta},
    {"bilinear_upsample", case_upsample},
    {"max_pool2", case_maxpool},
    {"adaptive_avg_pool", case_avgpool},
    {"linear.input", case_linear_x},
    {"linear.weights", case_linear_w},
    {"weighted_cross_entropy", case_weighted_ce},
    {"binary_cross_entropy", case_bce},
    {"lovasz_softmax", case_lovasz},
};

} // namespace

std::vector<GradcheckRow> run_gradcheck_suite(std::uint64_t seed, int seeds) {
    std::vector<GradcheckRow> rows;
    int index = 0;
    for (const auto& entry : kSuite) {
        GradcheckRow row;
        row.name = entry.name;
        row.pass = true;
        for (int s = 0; s < seeds; ++s) {
            RngState rng(seed + 1000003ULL * static_cast<std::uint64_t>(index) + s);
            Case c = entry.factory(rng);
            const auto rep = gradcheck(c.f, c.x, c.rtol);
            row.max_rel_err = std::max(row.max_rel_err, rep.max_rel_err);
            row.rtol = c.rtol;
            row.pass = row.pass && rep.pass;
        }
        rows.push_back(row);
        ++index;
    }
    return rows;
}

} // namespace ddcm
