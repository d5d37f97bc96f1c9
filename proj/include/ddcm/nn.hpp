#pragma once

#include <string>
#include <vector>

#include "ddcm/tensor.hpp"

namespace ddcm {

struct ConvSpec {
    int in_channels = 1;
    int out_channels = 1;
    int kernel = 3;
    int stride = 1;
    int dilation = 1;
    int padding = 0;
    bool bias = true;

    // A k x k kernel at dilation r spans k + (k-1)(r-1) input pixels.
    int effective_extent() const { return kernel + (kernel - 1) * (dilation - 1); }
    int out_size(int in) const {
        return (in + 2 * padding - effective_extent()) / stride + 1;
    }
    std::string describe() const;
};

// Cross-correlation with taps spaced `dilation` pixels apart and zero
// padding. x is (B,C,H,W), weights (out,in,k,k), bias (out) or null.
TensorPtr conv2d(Tape* tape, const TensorPtr& x, const ConvSpec& spec, const TensorPtr& weights,
                 const TensorPtr& bias);

// PReLU with one learnable slope per layer; `slope` is a scalar tensor.
// At x == 0 the positive branch is taken.
TensorPtr prelu(Tape* tape, const TensorPtr& x, const TensorPtr& slope);

TensorPtr relu(Tape* tape, const TensorPtr& x);

struct BatchNormState {
    TensorPtr gamma, beta; // (C)
    std::vector<double> running_mean, running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;
    bool training = true;

    explicit BatchNormState(int channels);
    int channels() const { return static_cast<int>(running_mean.size()); }
};

// Train mode normalizes by batch statistics (biased variance) and folds
// the unbiased variance into the running estimates; eval mode uses only
// the running statistics.
TensorPtr batch_norm(Tape* tape, const TensorPtr& x, BatchNormState& state);

TensorPtr bilinear_upsample(Tape* tape, const TensorPtr& x, int out_h, int out_w);

TensorPtr max_pool2(Tape* tape, const TensorPtr& x);

// Adaptive average pool to 1x1: (B,C,H,W) -> (B,C,1,1).
TensorPtr adaptive_avg_pool1(Tape* tape, const TensorPtr& x);

TensorPtr concat_channels(Tape* tape, const std::vector<TensorPtr>& xs);

// x (B,F), weights (out,F), bias (out) or null -> (B,out).
TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& weights, const TensorPtr& bias);

TensorPtr softmax(Tape* tape, const TensorPtr& x, int axis);

} // namespace ddcm
