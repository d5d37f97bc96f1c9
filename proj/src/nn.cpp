#include "ddcm/nn.hpp"

#include <cmath>
#include <sstream>

#include "ddcm/kernels.hpp"

namespace ddcm {

std::string ConvSpec::describe() const {
    std::ostringstream os;
    os << "conv(in=" << in_channels << ", out=" << out_channels << ", k=" << kernel
       << ", stride=" << stride << ", dilation=" << dilation << ", pad=" << padding
       << ", bias=" << (bias ? "yes" : "no") << ")";
    return os.str();
}

namespace {

bool track2(const Tape* tape, const TensorPtr& a, const TensorPtr& b = nullptr,
            const TensorPtr& c = nullptr) {
    if (!tape) return false;
    return a->requires_grad || (b && b->requires_grad) || (c && c->requires_grad);
}

} // namespace

TensorPtr conv2d(Tape* tape, const TensorPtr& x, const ConvSpec& spec, const TensorPtr& weights,
                 const TensorPtr& bias) {
    check(x->shape.size() == 4, "conv2d: input must be (B,C,H,W), got ", shape_str(x->shape));
    check(x->dim(1) == spec.in_channels, "conv2d: input has ", x->dim(1), " channels, ",
          spec.describe(), " expects ", spec.in_channels);
    const std::vector<int> wshape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
    check(weights->shape == wshape, "conv2d: weights shape ", shape_str(weights->shape),
          " does not match ", spec.describe());
    if (spec.bias) {
        check(bias && bias->shape == std::vector<int>{spec.out_channels},
              "conv2d: bias tensor missing or mis-shaped for ", spec.describe());
    }
    kernels::ConvDims d;
    d.batch = x->dim(0);
    d.in_c = x->dim(1);
    d.in_h = x->dim(2);
    d.in_w = x->dim(3);
    d.out_c = spec.out_channels;
    d.k = spec.kernel;
    d.stride = spec.stride;
    d.dilation = spec.dilation;
    d.pad = spec.padding;
    d.out_h = spec.out_size(d.in_h);
    d.out_w = spec.out_size(d.in_w);
    check(d.out_h > 0 && d.out_w > 0, "conv2d: non-positive output size ", d.out_h, "x", d.out_w,
          " for input ", shape_str(x->shape), " with ", spec.describe());

    auto out = Tensor::zeros({d.batch, d.out_c, d.out_h, d.out_w},
                             track2(tape, x, weights, bias));
    kernels::conv2d_forward(x->data.data(), weights->data.data(),
                            spec.bias ? bias->data.data() : nullptr, out->data.data(), d);
    if (out->requires_grad) {
        const TensorPtr b = spec.bias ? bias : nullptr;
        tape->record(out, [x, weights, b, out, d] {
            if (x->requires_grad)
                kernels::conv2d_backward_input(out->grad.data(), weights->data.data(),
                                               x->grad.data(), d);
            if (weights->requires_grad)
                kernels::conv2d_backward_weights(out->grad.data(), x->data.data(),
                                                 weights->grad.data(), d);
            if (b && b->requires_grad)
                kernels::conv2d_backward_bias(out->grad.data(), b->grad.data(), d);
        });
    }
    return out;
}

TensorPtr prelu(Tape* tape, const TensorPtr& x, const TensorPtr& slope) {
    check(slope->numel() == 1, "prelu: slope must be scalar, got ", shape_str(slope->shape));
    const double a = slope->data[0];
    const std::int64_t n = x->numel();
    std::vector<double> y(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = x->data[i];
        y[i] = v >= 0.0 ? v : a * v;
    }
    const bool rg = track2(tape, x, slope);
    auto out = std::make_shared<Tensor>(x->shape, std::move(y), rg);
    if (rg) {
        tape->record(out, [x, slope, out, a] {
            const std::int64_t m = x->numel();
            if (x->requires_grad) {
                for (std::int64_t i = 0; i < m; ++i)
                    x->grad[i] += out->grad[i] * (x->data[i] >= 0.0 ? 1.0 : a);
            }
            if (slope->requires_grad) {
                double acc = 0.0;
                for (std::int64_t i = 0; i < m; ++i)
                    if (x->data[i] < 0.0) acc += out->grad[i] * x->data[i];
                slope->grad[0] += acc;
            }
        });
    }
    return out;
}

TensorPtr relu(Tape* tape, const TensorPtr& x) { return emax(tape, x, 0.0); }

BatchNormState::BatchNormState(int ch) {
    gamma = Tensor::full({ch}, 1.0, true);
    beta = Tensor::zeros({ch}, true);
    running_mean.assign(ch, 0.0);
    running_var.assign(ch, 1.0);
}

TensorPtr batch_norm(Tape* tape, const TensorPtr& x, BatchNormState& state) {
    check(x->shape.size() == 4, "batch_norm: input must be (B,C,H,W), got ", shape_str(x->shape));
    const int B = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
    check(C == state.channels(), "batch_norm: ", C, " channels vs state with ", state.channels());
    const std::int64_t n_per_c = static_cast<std::int64_t>(B) * H * W;
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;

    std::vector<double> mean(C), inv_std(C);
    if (state.training) {
        check(n_per_c >= 2, "batch_norm: train mode needs batch*H*W >= 2 per channel, got ",
              n_per_c);
#pragma omp parallel for schedule(static)
        for (int c = 0; c < C; ++c) {
            double m = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* p = x->data.data() + (static_cast<std::int64_t>(b) * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) m += p[i];
            }
            m /= static_cast<double>(n_per_c);
            double v = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* p = x->data.data() + (static_cast<std::int64_t>(b) * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const double d = p[i] - m;
                    v += d * d;
                }
            }
            const double var_biased = v / static_cast<double>(n_per_c);
            const double var_unbiased = v / static_cast<double>(n_per_c - 1);
            mean[c] = m;
            inv_std[c] = 1.0 / std::sqrt(var_biased + state.epsilon);
            state.running_mean[c] =
                (1.0 - state.momentum) * state.running_mean[c] + state.momentum * m;
            state.running_var[c] =
                (1.0 - state.momentum) * state.running_var[c] + state.momentum * var_unbiased;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = state.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.epsilon);
        }
    }

    auto out = Tensor::zeros(x->shape, track2(tape, x, state.gamma, state.beta));
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        const double g = state.gamma->data[c];
        const double b0 = state.beta->data[c];
        for (int b = 0; b < B; ++b) {
            const std::int64_t off = (static_cast<std::int64_t>(b) * C + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i)
                out->data[off + i] = g * ((x->data[off + i] - mean[c]) * inv_std[c]) + b0;
        }
    }

    if (out->requires_grad) {
        const bool train = state.training;
        const TensorPtr gamma = state.gamma;
        const TensorPtr beta = state.beta;
        tape->record(out, [x, gamma, beta, out, mean, inv_std, train, B, C, plane, n_per_c] {
#pragma omp parallel for schedule(static)
            for (int c = 0; c < C; ++c) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (int b = 0; b < B; ++b) {
                    const std::int64_t off = (static_cast<std::int64_t>(b) * C + c) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        const double xh = (x->data[off + i] - mean[c]) * inv_std[c];
                        sum_g += out->grad[off + i];
                        sum_gx += out->grad[off + i] * xh;
                    }
                }
                if (gamma->requires_grad) gamma->grad[c] += sum_gx;
                if (beta->requires_grad) beta->grad[c] += sum_g;
                if (!x->requires_grad) continue;
                const double gc = gamma->data[c];
                if (train) {
                    const double inv_n = 1.0 / static_cast<double>(n_per_c);
                    for (int b = 0; b < B; ++b) {
                        const std::int64_t off = (static_cast<std::int64_t>(b) * C + c) * plane;
                        for (std::int64_t i = 0; i < plane; ++i) {
                            const double xh = (x->data[off + i] - mean[c]) * inv_std[c];
                            x->grad[off + i] +=
                                gc * inv_std[c] *
                                (out->grad[off + i] - inv_n * sum_g - xh * inv_n * sum_gx);
                        }
                    }
                } else {
                    for (int b = 0; b < B; ++b) {
                        const std::int64_t off = (static_cast<std::int64_t>(b) * C + c) * plane;
                        for (std::int64_t i = 0; i < plane; ++i)
                            x->grad[off + i] += gc * inv_std[c] * out->grad[off + i];
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr bilinear_upsample(Tape* tape, const TensorPtr& x, int out_h, int out_w) {
    check(x->shape.size() == 4, "bilinear_upsample: input must be (B,C,H,W), got ",
          shape_str(x->shape));
    check(out_h >= 1 && out_w >= 1, "bilinear_upsample: target size must be >= 1, got ", out_h,
          "x", out_w);
    const std::int64_t planes = static_cast<std::int64_t>(x->dim(0)) * x->dim(1);
    const int in_h = x->dim(2), in_w = x->dim(3);
    auto out = Tensor::zeros({x->dim(0), x->dim(1), out_h, out_w}, track2(tape, x));
    kernels::bilinear_forward(x->data.data(), out->data.data(), planes, in_h, in_w, out_h, out_w);
    if (out->requires_grad) {
        tape->record(out, [x, out, planes, in_h, in_w, out_h, out_w] {
            kernels::bilinear_backward(out->grad.data(), x->grad.data(), planes, in_h, in_w,
                                       out_h, out_w);
        });
    }
    return out;
}

TensorPtr max_pool2(Tape* tape, const TensorPtr& x) {
    check(x->shape.size() == 4, "max_pool2: input must be (B,C,H,W), got ", shape_str(x->shape));
    const int H = x->dim(2), W = x->dim(3);
    check(H % 2 == 0 && W % 2 == 0, "max_pool2: spatial dims must be even, got ", H, "x", W);
    const std::int64_t planes = static_cast<std::int64_t>(x->dim(0)) * x->dim(1);
    auto out = Tensor::zeros({x->dim(0), x->dim(1), H / 2, W / 2}, track2(tape, x));
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out->numel());
    kernels::maxpool2_forward(x->data.data(), out->data.data(), argmax->data(), planes, H, W);
    if (out->requires_grad) {
        tape->record(out, [x, out, argmax] {
            kernels::maxpool2_backward(out->grad.data(), x->grad.data(), argmax->data(),
                                       out->numel());
        });
    }
    return out;
}

TensorPtr adaptive_avg_pool1(Tape* tape, const TensorPtr& x) {
    check(x->shape.size() == 4, "adaptive_avg_pool1: input must be (B,C,H,W), got ",
          shape_str(x->shape));
    const std::int64_t planes = static_cast<std::int64_t>(x->dim(0)) * x->dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(x->dim(2)) * x->dim(3);
    auto out = Tensor::zeros({x->dim(0), x->dim(1), 1, 1}, track2(tape, x));
    kernels::avgpool_full_forward(x->data.data(), out->data.data(), planes, hw);
    if (out->requires_grad) {
        tape->record(out, [x, out, planes, hw] {
            kernels::avgpool_full_backward(out->grad.data(), x->grad.data(), planes, hw);
        });
    }
    return out;
}

TensorPtr concat_channels(Tape* tape, const std::vector<TensorPtr>& xs) {
    check(!xs.empty(), "concat_channels: no inputs");
    const int B = xs[0]->dim(0), H = xs[0]->dim(2), W = xs[0]->dim(3);
    int C = 0;
    bool rg = false;
    for (const auto& t : xs) {
        check(t->shape.size() == 4, "concat_channels: inputs must be (B,C,H,W), got ",
              shape_str(t->shape));
        check(t->dim(0) == B && t->dim(2) == H && t->dim(3) == W,
              "concat_channels: shape mismatch ", shape_str(t->shape), " vs ",
              shape_str(xs[0]->shape));
        C += t->dim(1);
        rg = rg || (tape && t->requires_grad);
    }
    auto out = Tensor::zeros({B, C, H, W}, rg);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    std::int64_t c_off = 0;
    for (const auto& t : xs) {
        const int tc = t->dim(1);
        for (int b = 0; b < B; ++b) {
            const double* src = t->data.data() + static_cast<std::int64_t>(b) * tc * plane;
            double* dst = out->data.data() + (static_cast<std::int64_t>(b) * C + c_off) * plane;
            std::copy(src, src + static_cast<std::int64_t>(tc) * plane, dst);
        }
        c_off += tc;
    }
    if (rg) {
        tape->record(out, [xs, out, B, C, plane] {
            std::int64_t off = 0;
            for (const auto& t : xs) {
                const int tc = t->dim(1);
                if (t->requires_grad) {
                    for (int b = 0; b < B; ++b) {
                        const double* g =
                            out->grad.data() + (static_cast<std::int64_t>(b) * C + off) * plane;
                        double* dst = t->grad.data() + static_cast<std::int64_t>(b) * tc * plane;
                        const std::int64_t n = static_cast<std::int64_t>(tc) * plane;
                        for (std::int64_t i = 0; i < n; ++i) dst[i] += g[i];
                    }
                }
                off += tc;
            }
        });
    }
    return out;
}

TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& weights, const TensorPtr& bias) {
    check(x->shape.size() == 2, "linear: input must be (B,F), got ", shape_str(x->shape));
    check(weights->shape.size() == 2 && weights->dim(1) == x->dim(1), "linear: weights ",
          shape_str(weights->shape), " incompatible with input ", shape_str(x->shape));
    const int B = x->dim(0), F = x->dim(1), O = weights->dim(0);
    if (bias) check(bias->shape == std::vector<int>{O}, "linear: bias shape mismatch");
    auto out = Tensor::zeros({B, O}, track2(tape, x, weights, bias));
    kernels::linear_forward(x->data.data(), weights->data.data(),
                            bias ? bias->data.data() : nullptr, out->data.data(), B, F, O);
    if (out->requires_grad) {
        tape->record(out, [x, weights, bias, out, B, F, O] {
            if (x->requires_grad)
                kernels::linear_backward_input(out->grad.data(), weights->data.data(),
                                               x->grad.data(), B, F, O);
            if (weights->requires_grad)
                kernels::linear_backward_weights(out->grad.data(), x->data.data(),
                                                 weights->grad.data(), B, F, O);
            if (bias && bias->requires_grad)
                kernels::linear_backward_bias(out->grad.data(), bias->grad.data(), B, O);
        });
    }
    return out;
}

TensorPtr softmax(Tape* tape, const TensorPtr& x, int axis) {
    const int rank = static_cast<int>(x->shape.size());
    check(axis >= 0 && axis < rank, "softmax: axis ", axis, " out of range for ",
          shape_str(x->shape));
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x->shape[i];
    for (int i = axis + 1; i < rank; ++i) inner *= x->shape[i];
    const int k = x->shape[axis];
    auto out = Tensor::zeros(x->shape, track2(tape, x));
    kernels::softmax_forward(x->data.data(), out->data.data(), outer, k, inner);
    if (out->requires_grad) {
        tape->record(out, [x, out, outer, k, inner] {
            kernels::softmax_backward(out->data.data(), out->grad.data(), x->grad.data(), outer,
                                      k, inner);
        });
    }
    return out;
}

} // namespace ddcm
