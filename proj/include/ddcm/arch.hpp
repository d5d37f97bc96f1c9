#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddcm/nn.hpp"
#include "ddcm/rng.hpp"
#include "ddcm/tensor.hpp"

namespace ddcm {

struct ParamRef {
    std::string name;
    TensorPtr tensor;
    bool is_bias = false; // bias group: 2x learning rate, no weight decay
    bool decay = true;
};
using ParamList = std::vector<ParamRef>;

struct BufferRef {
    std::string name;
    std::vector<double>* values;
};
using BufferList = std::vector<BufferRef>;

struct ConvLayer {
    ConvSpec spec;
    TensorPtr w, b;

    ConvLayer() = default;
    ConvLayer(const ConvSpec& s, RngState& rng);
    TensorPtr forward(Tape* tape, const TensorPtr& x) const;
    void collect(const std::string& prefix, ParamList& out);
};

struct PReLULayer {
    TensorPtr slope;

    PReLULayer() : slope(Tensor::scalar(0.25, true)) {}
    TensorPtr forward(Tape* tape, const TensorPtr& x) const { return prelu(tape, x, slope); }
    void collect(const std::string& prefix, ParamList& out) {
        out.push_back({prefix + ".a", slope, false, false});
    }
};

struct BatchNormLayer {
    BatchNormState state;

    explicit BatchNormLayer(int channels = 1) : state(channels) {}
    TensorPtr forward(Tape* tape, const TensorPtr& x) { return batch_norm(tape, x, state); }
    void collect(const std::string& prefix, ParamList& out);
    void collect_buffers(const std::string& prefix, BufferList& out);
};

struct LinearLayer {
    TensorPtr w, b;

    LinearLayer() = default;
    LinearLayer(int in_f, int out_f, RngState& rng);
    TensorPtr forward(Tape* tape, const TensorPtr& x) const { return linear(tape, x, w, b); }
    void collect(const std::string& prefix, ParamList& out);
};

// Dilated conv (stride 2) -> PReLU -> BN -> bilinear upsample back to the
// input size -> concat with the input. Output carries in+growth channels
// at unchanged spatial size.
struct DCsBlockSpec {
    int in_channels = 1;
    int growth = 1;
    int dilation = 1;
    int kernel = 3;
};

struct DCsBlock {
    DCsBlockSpec spec;
    ConvLayer conv;
    PReLULayer act;
    BatchNormLayer bn;

    DCsBlock(const DCsBlockSpec& s, RngState& rng);
    TensorPtr forward(Tape* tape, const TensorPtr& x);
    void collect(const std::string& prefix, ParamList& out);
    void collect_buffers(const std::string& prefix, BufferList& out);
};

// Chain of DCs blocks over a dilation list, fused by a 1x1 merging module
// (conv + BN + PReLU).
struct DDCMSpec {
    std::vector<int> dilations;
    int growth = 1;
    int merge_out = 1;
    int kernel = 3;
};

struct DDCMModule {
    DDCMSpec spec;
    int in_channels = 0;
    std::vector<DCsBlock> blocks;
    ConvLayer merge;
    BatchNormLayer merge_bn;
    PReLULayer merge_act;

    DDCMModule() = default;
    DDCMModule(int in_channels, const DDCMSpec& s, RngState& rng);
    TensorPtr forward(Tape* tape, const TensorPtr& x);
    int stack_channels() const; // in + N * growth, before merging
    void collect(const std::string& prefix, ParamList& out);
    void collect_buffers(const std::string& prefix, BufferList& out);
};

// Pre-activation-free classic bottleneck: 1x1 -> 3x3(stride) -> 1x1 with
// identity or projected skip, ReLU activations.
struct BottleneckBlock {
    ConvLayer c1, c2, c3;
    BatchNormLayer b1, b2, b3;
    bool has_down = false;
    ConvLayer down;
    BatchNormLayer down_bn;

    BottleneckBlock(int in_ch, int mid_ch, int out_ch, int stride, RngState& rng);
    TensorPtr forward(Tape* tape, const TensorPtr& x);
    void collect(const std::string& prefix, ParamList& out);
    void collect_buffers(const std::string& prefix, BufferList& out);
};

// Truncated residual encoder: 7x7/2 stem with BN/ReLU, optional 2x2 max
// pool, then bottleneck stages. The default (width 64, blocks {3,4,6},
// strides {1,2,2}, pooled stem) is the first three bottleneck stages of
// the canonical 50-layer design: output stride 16, 1024 channels.
struct Backbone {
    ConvLayer stem;
    BatchNormLayer stem_bn;
    bool stem_pool = true;
    std::vector<std::vector<BottleneckBlock>> stages;
    int out_channels = 0;
    int out_stride = 0;

    Backbone() = default;
    Backbone(int in_ch, int base_width, const std::vector<int>& blocks,
             const std::vector<int>& stage_strides, bool stem_pool, RngState& rng);
    TensorPtr forward(Tape* tape, const TensorPtr& x);
    void collect(const std::string& prefix, ParamList& out);
    void collect_buffers(const std::string& prefix, BufferList& out);
};

// Learns the missing bands for inputs with fewer than 3: 3x3 conv + BN +
// PReLU produces 3-in_bands channels that are stacked with the input.
// Inputs with >= 3 bands pass through unchanged.
struct BandExpand {
    bool active = false;
    ConvLayer conv;
    BatchNormLayer bn;
    PReLULayer act;

    BandExpand() = default;
    BandExpand(int in_bands, RngState& rng);
    TensorPtr forward(Tape* tape, const TensorPtr& x);
    void collect(const std::string& prefix, ParamList& out);
    void collect_buffers(const std::string& prefix, BufferList& out);
};

struct NetworkConfig {
    int input_bands = 2;
    int num_classes = 4; // background, Road1, Road2, Road3
    int kernel = 3;

    std::vector<int> low_dilations{1, 2, 3, 5, 7, 9};
    int low_growth = 24;
    int low_merge = 36;

    std::vector<int> high_dilations{1, 2, 3, 4};
    int high_growth = 64;
    int high_merge = 128;

    std::vector<int> high2_dilations{1};
    int high2_growth = 64;
    int high2_merge = 36;

    int backbone_width = 64;
    std::vector<int> backbone_blocks{3, 4, 6};
    std::vector<int> backbone_strides{1, 2, 2};
    bool stem_pool = true;

    bool head_binary = true;
    bool head_presence = true;

    int backbone_out_stride() const;
    // Input H and W must be multiples of this; covers the fusion grid at
    // 1/4 resolution and one clean stride-2 halving below the deepest
    // feature map. 32 for the default backbone.
    int required_divisor() const;
    void validate() const;

    static NetworkConfig tiny(); // 8x8-capable, all widths <= 8
};

struct JtOutputs {
    TensorPtr full_seg;   // (B, num_classes, H, W)
    TensorPtr binary_seg; // (B, 1, H, W) or null when the head is off
    TensorPtr presence;   // (B, num_classes-1) or null when the head is off
};

class JtDdcmNet {
public:
    NetworkConfig cfg;
    DDCMModule low_ddcm;
    BandExpand band_expand;
    Backbone backbone;
    DDCMModule high_ddcm_a, high_ddcm_b;
    ConvLayer seg_head, binary_head;
    LinearLayer presence_head;

    JtDdcmNet(const NetworkConfig& config, RngState& rng);

    JtOutputs forward(Tape* tape, const TensorPtr& x); // x (B, bands, H, W)
    // (bands, H, W) in, unbatched outputs: (K,H,W), (1,H,W), (K-1).
    JtOutputs forward_single(Tape* tape, const TensorPtr& x);

    void set_training(bool training);
    ParamList params();
    BufferList buffers();
    std::int64_t param_count();

private:
    int fusion_channels_ = 0;
};

struct SummaryRow {
    std::string component;
    std::int64_t params = 0;
    double macs = 0.0;
};

struct Summary {
    std::vector<SummaryRow> rows;
    std::int64_t total_params = 0;
    double total_macs = 0.0; // multiply-accumulates for one (bands,h,w) input
    int input_h = 0, input_w = 0;
};

// Exact parameter counts by traversal; MACs estimated as
// out_elements*k^2*in_channels per conv plus in*out per linear layer.
Summary summarize(const NetworkConfig& cfg, int input_h, int input_w);

std::string format_summary(const Summary& s);

// Published reference totals for the 2-band joint-task model at 256x256
// (reporting context only, never asserted against).
inline constexpr double kReferenceParamsMillion = 9.30;
inline constexpr double kReferenceGFlops = 4.44;

} // namespace ddcm
