#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddcm/arch.hpp"
#include "ddcm/data.hpp"
#include "ddcm/losses.hpp"

namespace ddcm {

// Every tunable of the toolkit, parsed from a plain-text key=value file
// (one pair per line, '#' comments) with repeatable --set overrides.
// Unknown keys are rejected; keys under "derived." are accepted and
// ignored so a run manifest can be replayed as a config.
struct RunConfig {
    std::uint64_t seed = 12345;
    std::string run_dir = "runs/default";

    int net_bands = 2;
    int net_classes = 4;
    int net_kernel = 3;
    std::vector<int> net_low_dilations{1, 2, 3, 5, 7, 9};
    int net_low_growth = 24;
    int net_low_merge = 36;
    std::vector<int> net_high_dilations{1, 2, 3, 4};
    int net_high_growth = 64;
    int net_high_merge = 128;
    std::vector<int> net_high2_dilations{1};
    int net_high2_growth = 64;
    int net_high2_merge = 36;
    int net_backbone_width = 64;
    std::vector<int> net_backbone_blocks{3, 4, 6};
    std::vector<int> net_backbone_strides{1, 2, 2};
    bool net_stem_pool = true;
    bool net_head_binary = true;
    bool net_head_presence = true;

    std::string loss_pairing = "presence_bce"; // or presence_and_binary_bce

    std::string train_scene;
    std::string train_val_scene;
    int train_iterations = 300;
    int train_batch = 1;
    int train_patch = 256;
    int train_patches_per_epoch = 5000;
    double train_lr = 0.00012;
    std::vector<int> train_lr_milestones{5, 15, 25, 65, 100};
    double train_lr_factor = 0.5;
    double train_bias_lr_mult = 2.0;
    double train_weight_decay = 0.00005;
    bool train_decoupled_decay = false;
    double train_beta1 = 0.9;
    double train_beta2 = 0.999;
    double train_eps = 1e-8;
    bool train_checkpoint_epochs = true;

    int synth_height = 1024;
    int synth_width = 1024;
    int synth_roads1 = 6;
    int synth_roads2 = 6;
    int synth_roads3 = 6;
    double synth_width1_min = 10.0, synth_width1_max = 16.0;
    double synth_width2_min = 6.0, synth_width2_max = 9.0;
    double synth_width3_min = 3.5, synth_width3_max = 6.0;
    double synth_noise = 0.015;

    int infer_window = 256;
    double infer_overlap = 0.6;
    bool infer_tta = true;
    int eval_ignore = -1;

    NetworkConfig network() const;
    BcePairing pairing() const;
    SynthSpec synth_spec() const;

    // All keys, sorted, one per line; byte-stable for manifests.
    std::string serialize() const;
    // Only the network keys; checkpoints embed this for shape validation.
    std::string network_echo() const;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text, const std::string& origin = "<text>");
    void apply_override(const std::string& key_equals_value);
};

} // namespace ddcm
