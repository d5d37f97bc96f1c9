#include "ddcm/arch.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace ddcm {

namespace {

TensorPtr he_weights(const ConvSpec& s, RngState& rng) {
    const int fan_in = s.in_channels * s.kernel * s.kernel;
    return Tensor::randn({s.out_channels, s.in_channels, s.kernel, s.kernel}, rng,
                         std::sqrt(2.0 / fan_in), true);
}

} // namespace

ConvLayer::ConvLayer(const ConvSpec& s, RngState& rng) : spec(s) {
    w = he_weights(s, rng);
    if (s.bias) b = Tensor::zeros({s.out_channels}, true);
}

TensorPtr ConvLayer::forward(Tape* tape, const TensorPtr& x) const {
    return conv2d(tape, x, spec, w, b);
}

void ConvLayer::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".w", w, false, true});
    if (b) out.push_back({prefix + ".b", b, true, false});
}

void BatchNormLayer::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".gamma", state.gamma, false, false});
    out.push_back({prefix + ".beta", state.beta, true, false});
}

void BatchNormLayer::collect_buffers(const std::string& prefix, BufferList& out) {
    out.push_back({prefix + ".run_mean", &state.running_mean});
    out.push_back({prefix + ".run_var", &state.running_var});
}

LinearLayer::LinearLayer(int in_f, int out_f, RngState& rng) {
    w = Tensor::randn({out_f, in_f}, rng, std::sqrt(2.0 / in_f), true);
    b = Tensor::zeros({out_f}, true);
}

void LinearLayer::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".w", w, false, true});
    out.push_back({prefix + ".b", b, true, false});
}

DCsBlock::DCsBlock(const DCsBlockSpec& s, RngState& rng) : spec(s), bn(s.growth) {
    ConvSpec cs;
    cs.in_channels = s.in_channels;
    cs.out_channels = s.growth;
    cs.kernel = s.kernel;
    cs.stride = 2;
    cs.dilation = s.dilation;
    // keeps the pre-stride footprint centered so H/2 x W/2 comes out
    cs.padding = s.dilation * (s.kernel - 1) / 2;
    cs.bias = true;
    conv = ConvLayer(cs, rng);
}

TensorPtr DCsBlock::forward(Tape* tape, const TensorPtr& x) {
    const int h = x->dim(2), w = x->dim(3);
    auto y = conv.forward(tape, x);
    y = act.forward(tape, y);
    y = bn.forward(tape, y);
    y = bilinear_upsample(tape, y, h, w);
    return concat_channels(tape, {y, x});
}

void DCsBlock::collect(const std::string& prefix, ParamList& out) {
    conv.collect(prefix + ".conv", out);
    act.collect(prefix + ".act", out);
    bn.collect(prefix + ".bn", out);
}

void DCsBlock::collect_buffers(const std::string& prefix, BufferList& out) {
    bn.collect_buffers(prefix + ".bn", out);
}

DDCMModule::DDCMModule(int in_ch, const DDCMSpec& s, RngState& rng)
    : spec(s), in_channels(in_ch), merge_bn(s.merge_out) {
    check(!s.dilations.empty(), "ddcm: dilation list must be nonempty");
    int ch = in_ch;
    for (int r : s.dilations) {
        DCsBlockSpec bs;
        bs.in_channels = ch;
        bs.growth = s.growth;
        bs.dilation = r;
        bs.kernel = s.kernel;
        blocks.emplace_back(bs, rng);
        ch += s.growth;
    }
    ConvSpec ms;
    ms.in_channels = ch;
    ms.out_channels = s.merge_out;
    ms.kernel = 1;
    ms.bias = false;
    merge = ConvLayer(ms, rng);
}

int DDCMModule::stack_channels() const {
    return in_channels + static_cast<int>(spec.dilations.size()) * spec.growth;
}

TensorPtr DDCMModule::forward(Tape* tape, const TensorPtr& x) {
    auto y = x;
    for (auto& blk : blocks) y = blk.forward(tape, y);
    y = merge.forward(tape, y);
    y = merge_bn.forward(tape, y);
    return merge_act.forward(tape, y);
}

void DDCMModule::collect(const std::string& prefix, ParamList& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect(prefix + ".block" + std::to_string(i), out);
    merge.collect(prefix + ".merge", out);
    merge_bn.collect(prefix + ".merge_bn", out);
    merge_act.collect(prefix + ".merge_act", out);
}

void DDCMModule::collect_buffers(const std::string& prefix, BufferList& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect_buffers(prefix + ".block" + std::to_string(i), out);
    merge_bn.collect_buffers(prefix + ".merge_bn", out);
}

BottleneckBlock::BottleneckBlock(int in_ch, int mid_ch, int out_ch, int stride, RngState& rng)
    : b1(mid_ch), b2(mid_ch), b3(out_ch) {
    ConvSpec s1{in_ch, mid_ch, 1, 1, 1, 0, false};
    ConvSpec s2{mid_ch, mid_ch, 3, stride, 1, 1, false};
    ConvSpec s3{mid_ch, out_ch, 1, 1, 1, 0, false};
    c1 = ConvLayer(s1, rng);
    c2 = ConvLayer(s2, rng);
    c3 = ConvLayer(s3, rng);
    if (in_ch != out_ch || stride != 1) {
        has_down = true;
        ConvSpec sd{in_ch, out_ch, 1, stride, 1, 0, false};
        down = ConvLayer(sd, rng);
        down_bn = BatchNormLayer(out_ch);
    }
}

TensorPtr BottleneckBlock::forward(Tape* tape, const TensorPtr& x) {
    auto y = relu(tape, b1.forward(tape, c1.forward(tape, x)));
    y = relu(tape, b2.forward(tape, c2.forward(tape, y)));
    y = b3.forward(tape, c3.forward(tape, y));
    auto s = has_down ? down_bn.forward(tape, down.forward(tape, x)) : x;
    return relu(tape, add(tape, y, s));
}

void BottleneckBlock::collect(const std::string& prefix, ParamList& out) {
    c1.collect(prefix + ".c1", out);
    b1.collect(prefix + ".b1", out);
    c2.collect(prefix + ".c2", out);
    b2.collect(prefix + ".b2", out);
    c3.collect(prefix + ".c3", out);
    b3.collect(prefix + ".b3", out);
    if (has_down) {
        down.collect(prefix + ".down", out);
        down_bn.collect(prefix + ".down_bn", out);
    }
}

void BottleneckBlock::collect_buffers(const std::string& prefix, BufferList& out) {
    b1.collect_buffers(prefix + ".b1", out);
    b2.collect_buffers(prefix + ".b2", out);
    b3.collect_buffers(prefix + ".b3", out);
    if (has_down) down_bn.collect_buffers(prefix + ".down_bn", out);
}

Backbone::Backbone(int in_ch, int base_width, const std::vector<int>& blocks,
                   const std::vector<int>& stage_strides, bool pool, RngState& rng)
    : stem_bn(base_width), stem_pool(pool) {
    check(!blocks.empty() && blocks.size() == stage_strides.size(),
          "backbone: blocks/strides lists must match and be nonempty");
    ConvSpec ss{in_ch, base_width, 7, 2, 1, 3, false};
    stem = ConvLayer(ss, rng);
    out_stride = 2 * (pool ? 2 : 1);
    int ch = base_width;
    for (std::size_t s = 0; s < blocks.size(); ++s) {
        const int mid = base_width << s;
        const int out = 4 * mid;
        std::vector<BottleneckBlock> stage;
        for (int i = 0; i < blocks[s]; ++i) {
            const int stride = i == 0 ? stage_strides[s] : 1;
            stage.emplace_back(ch, mid, out, stride, rng);
            ch = out;
        }
        stages.push_back(std::move(stage));
        out_stride *= stage_strides[s];
    }
    out_channels = ch;
}

TensorPtr Backbone::forward(Tape* tape, const TensorPtr& x) {
    auto y = relu(tape, stem_bn.forward(tape, stem.forward(tape, x)));
    if (stem_pool) y = max_pool2(tape, y);
    for (auto& stage : stages)
        for (auto& blk : stage) y = blk.forward(tape, y);
    return y;
}

void Backbone::collect(const std::string& prefix, ParamList& out) {
    stem.collect(prefix + ".stem.conv", out);
    stem_bn.collect(prefix + ".stem.bn", out);
    for (std::size_t s = 0; s < stages.size(); ++s)
        for (std::size_t i = 0; i < stages[s].size(); ++i)
            stages[s][i].collect(
                prefix + ".stage" + std::to_string(s) + ".block" + std::to_string(i), out);
}

void Backbone::collect_buffers(const std::string& prefix, BufferList& out) {
    stem_bn.collect_buffers(prefix + ".stem.bn", out);
    for (std::size_t s = 0; s < stages.size(); ++s)
        for (std::size_t i = 0; i < stages[s].size(); ++i)
            stages[s][i].collect_buffers(
                prefix + ".stage" + std::to_string(s) + ".block" + std::to_string(i), out);
}

BandExpand::BandExpand(int in_bands, RngState& rng) {
    active = in_bands < 3;
    if (!active) return;
    const int missing = 3 - in_bands;
    ConvSpec cs{in_bands, missing, 3, 1, 1, 1, false};
    conv = ConvLayer(cs, rng);
    bn = BatchNormLayer(missing);
}

TensorPtr BandExpand::forward(Tape* tape, const TensorPtr& x) {
    if (!active) return x;
    auto extra = act.forward(tape, bn.forward(tape, conv.forward(tape, x)));
    return concat_channels(tape, {x, extra});
}

void BandExpand::collect(const std::string& prefix, ParamList& out) {
    if (!active) return;
    conv.collect(prefix + ".conv", out);
    bn.collect(prefix + ".bn", out);
    act.collect(prefix + ".act", out);
}

void BandExpand::collect_buffers(const std::string& prefix, BufferList& out) {
    if (active) bn.collect_buffers(prefix + ".bn", out);
}

int NetworkConfig::backbone_out_stride() const {
    int s = 2 * (stem_pool ? 2 : 1);
    for (int st : backbone_strides) s *= st;
    return s;
}

int NetworkConfig::required_divisor() const {
    return std::max(4, 2 * backbone_out_stride());
}

void NetworkConfig::validate() const {
    check(input_bands >= 1, "config: input_bands must be >= 1");
    check(num_classes >= 2, "config: num_classes must be >= 2");
    check(!low_dilations.empty() && !high_dilations.empty() && !high2_dilations.empty(),
          "config: dilation lists must be nonempty");
    check(low_growth > 0 && low_merge > 0 && high_growth > 0 && high_merge > 0 &&
              high2_growth > 0 && high2_merge > 0,
          "config: channel widths must be positive");
    check(backbone_width > 0, "config: backbone_width must be positive");
    check(!backbone_blocks.empty() && backbone_blocks.size() == backbone_strides.size(),
          "config: backbone_blocks and backbone_strides must match");
    check(kernel >= 1 && kernel % 2 == 1, "config: kernel must be odd and positive");
}

NetworkConfig NetworkConfig::tiny() {
    NetworkConfig c;
    c.low_dilations = {1, 2};
    c.low_growth = 4;
    c.low_merge = 8;
    c.high_dilations = {1, 2};
    c.high_growth = 4;
    c.high_merge = 8;
    c.high2_dilations = {1};
    c.high2_growth = 4;
    c.high2_merge = 8;
    c.backbone_width = 2;
    c.backbone_blocks = {1};
    c.backbone_strides = {2};
    c.stem_pool = false;
    return c;
}

JtDdcmNet::JtDdcmNet(const NetworkConfig& config, RngState& rng) : cfg(config) {
    cfg.validate();
    // per-component streams keep shared weights identical across head toggles
    auto r_low = rng.fork(1);
    auto r_band = rng.fork(2);
    auto r_bb = rng.fork(3);
    auto r_ha = rng.fork(4);
    auto r_hb = rng.fork(5);
    auto r_seg = rng.fork(6);
    auto r_bin = rng.fork(7);
    auto r_pres = rng.fork(8);

    low_ddcm = DDCMModule(cfg.input_bands,
                          {cfg.low_dilations, cfg.low_growth, cfg.low_merge, cfg.kernel}, r_low);
    band_expand = BandExpand(cfg.input_bands, r_band);
    const int bb_in = std::max(3, cfg.input_bands);
    backbone = Backbone(bb_in, cfg.backbone_width, cfg.backbone_blocks, cfg.backbone_strides,
                        cfg.stem_pool, r_bb);
    high_ddcm_a = DDCMModule(
        backbone.out_channels, {cfg.high_dilations, cfg.high_growth, cfg.high_merge, cfg.kernel},
        r_ha);
    high_ddcm_b = DDCMModule(
        cfg.high_merge, {cfg.high2_dilations, cfg.high2_growth, cfg.high2_merge, cfg.kernel},
        r_hb);
    fusion_channels_ = cfg.low_merge + cfg.high2_merge;
    seg_head = ConvLayer({fusion_channels_, cfg.num_classes, 1, 1, 1, 0, true}, r_seg);
    if (cfg.head_binary) binary_head = ConvLayer({fusion_channels_, 1, 1, 1, 1, 0, true}, r_bin);
    if (cfg.head_presence)
        presence_head = LinearLayer(fusion_channels_, cfg.num_classes - 1, r_pres);
}

JtOutputs JtDdcmNet::forward(Tape* tape, const TensorPtr& x) {
    check(x->shape.size() == 4, "jt forward: input must be (B,bands,H,W), got ",
          shape_str(x->shape));
    check(x->dim(1) == cfg.input_bands, "jt forward: expected ", cfg.input_bands,
          " input bands, got ", x->dim(1));
    const int H = x->dim(2), W = x->dim(3);
    const int div = cfg.required_divisor();
    check(H % div == 0 && W % div == 0, "jt forward: input size ", H, "x", W,
          " must be a multiple of ", div);

    // low-level context from the raw bands, pooled to the 1/4 fusion grid
    auto low = low_ddcm.forward(tape, x);
    low = max_pool2(tape, max_pool2(tape, low));

    // high-level semantics: expanded bands -> residual encoder -> two DDCMs
    auto h = band_expand.forward(tape, x);
    h = backbone.forward(tape, h);
    h = high_ddcm_a.forward(tape, h);
    h = bilinear_upsample(tape, h, H / 4, W / 4);
    h = high_ddcm_b.forward(tape, h);

    auto fused = concat_channels(tape, {low, h});

    JtOutputs out;
    out.full_seg = bilinear_upsample(tape, seg_head.forward(tape, fused), H, W);
    if (cfg.head_binary)
        out.binary_seg = bilinear_upsample(tape, binary_head.forward(tape, fused), H, W);
    if (cfg.head_presence) {
        auto pooled = adaptive_avg_pool1(tape, fused);
        auto flat = reshape(tape, pooled, {x->dim(0), fusion_channels_});
        out.presence = presence_head.forward(tape, flat);
    }
    return out;
}

JtOutputs JtDdcmNet::forward_single(Tape* tape, const TensorPtr& x) {
    check(x->shape.size() == 3, "jt forward_single: input must be (bands,H,W), got ",
          shape_str(x->shape));
    auto batched = reshape(tape, x, {1, x->dim(0), x->dim(1), x->dim(2)});
    auto out = forward(tape, batched);
    JtOutputs squeezed;
    squeezed.full_seg =
        reshape(tape, out.full_seg, {cfg.num_classes, x->dim(1), x->dim(2)});
    if (out.binary_seg)
        squeezed.binary_seg = reshape(tape, out.binary_seg, {1, x->dim(1), x->dim(2)});
    if (out.presence) squeezed.presence = reshape(tape, out.presence, {cfg.num_classes - 1});
    return squeezed;
}

void JtDdcmNet::set_training(bool training) {
    auto bufs = BufferList{};
    // walk every BN through the collectors to avoid duplicating the layout
    low_ddcm.merge_bn.state.training = training;
    for (auto& b : low_ddcm.blocks) b.bn.state.training = training;
    if (band_expand.active) band_expand.bn.state.training = training;
    backbone.stem_bn.state.training = training;
    for (auto& st : backbone.stages)
        for (auto& blk : st) {
            blk.b1.state.training = training;
            blk.b2.state.training = training;
            blk.b3.state.training = training;
            if (blk.has_down) blk.down_bn.state.training = training;
        }
    for (auto& b : high_ddcm_a.blocks) b.bn.state.training = training;
    high_ddcm_a.merge_bn.state.training = training;
    for (auto& b : high_ddcm_b.blocks) b.bn.state.training = training;
    high_ddcm_b.merge_bn.state.training = training;
}

ParamList JtDdcmNet::params() {
    ParamList out;
    low_ddcm.collect("low_ddcm", out);
    band_expand.collect("band_expand", out);
    backbone.collect("backbone", out);
    high_ddcm_a.collect("high_ddcm_a", out);
    high_ddcm_b.collect("high_ddcm_b", out);
    seg_head.collect("seg_head", out);
    if (cfg.head_binary) binary_head.collect("binary_head", out);
    if (cfg.head_presence) presence_head.collect("presence_head", out);
    return out;
}

BufferList JtDdcmNet::buffers() {
    BufferList out;
    low_ddcm.collect_buffers("low_ddcm", out);
    band_expand.collect_buffers("band_expand", out);
    backbone.collect_buffers("backbone", out);
    high_ddcm_a.collect_buffers("high_ddcm_a", out);
    high_ddcm_b.collect_buffers("high_ddcm_b", out);
    return out;
}

std::int64_t JtDdcmNet::param_count() {
    std::int64_t n = 0;
    for (const auto& p : params()) n += p.tensor->numel();
    return n;
}

namespace {

double conv_macs(const ConvSpec& s, int in_h, int in_w, int* out_h = nullptr,
                 int* out_w = nullptr) {
    const int oh = s.out_size(in_h);
    const int ow = s.out_size(in_w);
    if (out_h) *out_h = oh;
    if (out_w) *out_w = ow;
    return static_cast<double>(oh) * ow * s.out_channels * s.kernel * s.kernel * s.in_channels;
}

double ddcm_macs(const DDCMModule& m, int h, int w) {
    double macs = 0.0;
    for (const auto& blk : m.blocks) macs += conv_macs(blk.conv.spec, h, w);
    macs += conv_macs(m.merge.spec, h, w);
    return macs;
}

double backbone_macs(const Backbone& bb, int h, int w, int* out_h, int* out_w) {
    double macs = conv_macs(bb.stem.spec, h, w, &h, &w);
    if (bb.stem_pool) {
        h /= 2;
        w /= 2;
    }
    for (const auto& stage : bb.stages) {
        for (const auto& blk : stage) {
            int h2 = 0, w2 = 0;
            macs += conv_macs(blk.c1.spec, h, w);
            macs += conv_macs(blk.c2.spec, h, w, &h2, &w2);
            macs += conv_macs(blk.c3.spec, h2, w2);
            if (blk.has_down) macs += conv_macs(blk.down.spec, h, w);
            h = h2;
            w = w2;
        }
    }
    *out_h = h;
    *out_w = w;
    return macs;
}

} // namespace

Summary summarize(const NetworkConfig& cfg, int input_h, int input_w) {
    RngState rng(0);
    JtDdcmNet net(cfg, rng);

    Summary s;
    s.input_h = input_h;
    s.input_w = input_w;

    std::vector<std::pair<std::string, double>> macs;
    macs.emplace_back("low_ddcm", ddcm_macs(net.low_ddcm, input_h, input_w));
    double band_m = 0.0;
    if (net.band_expand.active)
        band_m = conv_macs(net.band_expand.conv.spec, input_h, input_w);
    macs.emplace_back("band_expand", band_m);
    int bh = 0, bw = 0;
    macs.emplace_back("backbone", backbone_macs(net.backbone, input_h, input_w, &bh, &bw));
    macs.emplace_back("high_ddcm_a", ddcm_macs(net.high_ddcm_a, bh, bw));
    macs.emplace_back("high_ddcm_b", ddcm_macs(net.high_ddcm_b, input_h / 4, input_w / 4));
    macs.emplace_back("seg_head", conv_macs(net.seg_head.spec, input_h / 4, input_w / 4));
    if (cfg.head_binary)
        macs.emplace_back("binary_head",
                          conv_macs(net.binary_head.spec, input_h / 4, input_w / 4));
    if (cfg.head_presence)
        macs.emplace_back("presence_head",
                          static_cast<double>(net.presence_head.w->dim(0)) *
                              net.presence_head.w->dim(1));

    for (const auto& [name, m] : macs) {
        SummaryRow row;
        row.component = name;
        row.macs = m;
        for (const auto& p : net.params())
            if (p.name.rfind(name + ".", 0) == 0) row.params += p.tensor->numel();
        s.rows.push_back(row);
        s.total_params += row.params;
        s.total_macs += row.macs;
    }
    return s;
}

std::string format_summary(const Summary& s) {
    std::ostringstream os;
    os << "component        params       MACs(G) at " << s.input_h << "x" << s.input_w << "\n";
    char buf[128];
    for (const auto& r : s.rows) {
        std::snprintf(buf, sizeof buf, "%-16s %-12lld %.4f\n", r.component.c_str(),
                      static_cast<long long>(r.params), r.macs / 1e9);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "%-16s %-12lld %.4f\n", "total",
                  static_cast<long long>(s.total_params), s.total_macs / 1e9);
    os << buf;
    const double params_m = static_cast<double>(s.total_params) / 1e6;
    std::snprintf(buf, sizeof buf,
                  "reference 2-band joint-task model: %.2fM params, %.2f GFLOPs\n",
                  kReferenceParamsMillion, kReferenceGFlops);
    os << buf;
    std::snprintf(buf, sizeof buf, "deviation from reference: %+.1f%% params (this config: %.2fM)\n",
                  100.0 * (params_m - kReferenceParamsMillion) / kReferenceParamsMillion,
                  params_m);
    os << buf;
    return os.str();
}

} // namespace ddcm
