#include "ddcm/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ddcm/losses.hpp"
#include "ddcm/optim.hpp"

namespace ddcm {

namespace fs = std::filesystem;

namespace {

std::string epoch_ckpt_name(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%04d.ckpt", epoch);
    return buf;
}

} // namespace

TileModel make_tile_model(JtDdcmNet& net) {
    TileModel m;
    m.bands = net.cfg.input_bands;
    m.num_classes = net.cfg.num_classes;
    m.run = [&net](const std::vector<double>& window, int h, int w) {
        auto x = Tensor::from({1, net.cfg.input_bands, h, w}, window, false);
        auto out = net.forward(nullptr, x);
        auto probs = softmax(nullptr, out.full_seg, 1);
        return probs->data;
    };
    return m;
}

MetricsReport evaluate_scene(JtDdcmNet& net, const LabeledRaster& scene, int window,
                             double overlap, bool tta) {
    check(scene.has_labels(), "evaluate_scene: scene carries no labels");
    auto stitched = infer_scene(net, scene, window, overlap, tta);
    auto cm = confusion(stitched.classes, scene.labels, net.cfg.num_classes);
    return report(cm);
}

StitchResult infer_scene(JtDdcmNet& net, const LabeledRaster& scene, int window, double overlap,
                         bool tta) {
    net.set_training(false);
    auto model = make_tile_model(net);
    if (tta) model = tta_wrap(model);
    auto grid = TileGrid::make(scene.height, scene.width, window, overlap);
    return stitch(scene, model, grid);
}

TrainResult train_run(const RunConfig& cfg, std::ostream* progress) {
    const NetworkConfig net_cfg = cfg.network();
    net_cfg.validate();
    check(!cfg.train_scene.empty(), "train: train.scene is required");
    check(cfg.train_iterations >= 1, "train: train.iterations must be >= 1");
    check(cfg.train_batch >= 1, "train: train.batch must be >= 1");

    LabeledRaster scene = read_raster(cfg.train_scene);
    scene.num_classes = cfg.net_classes;
    check(scene.has_labels(), "train: scene ", cfg.train_scene, " carries no labels");
    check(scene.bands == cfg.net_bands, "train: scene has ", scene.bands, " bands, config says ",
          cfg.net_bands);

    // class frequencies over the training scene drive the loss weights
    std::vector<double> freq(cfg.net_classes, 0.0);
    for (auto c : scene.labels) {
        check(c < cfg.net_classes, "train: scene label ", int(c), " out of range");
        freq[c] += 1.0;
    }
    const ClassWeights weights = median_frequency_weights(freq);

    RngState root(cfg.seed);
    RngState rng_init = root.fork(1);
    RngState rng_data = root.fork(2);
    RngState rng_loss = root.fork(3);

    JtDdcmNet net(net_cfg, rng_init);
    net.set_training(true);
    const bool joint = net_cfg.head_binary && net_cfg.head_presence;

    AdamConfig adam;
    adam.beta1 = cfg.train_beta1;
    adam.beta2 = cfg.train_beta2;
    adam.eps = cfg.train_eps;
    adam.weight_decay = cfg.train_weight_decay;
    adam.decoupled = cfg.train_decoupled_decay;
    auto params = net.params();
    AdamAmsgrad opt(params, adam);

    LrSchedule sched;
    sched.initial = cfg.train_lr;
    sched.milestones = cfg.train_lr_milestones;
    sched.factor = cfg.train_lr_factor;
    sched.bias_multiplier = cfg.train_bias_lr_mult;

    fs::create_directories(cfg.run_dir);
    fs::create_directories(cfg.run_dir + "/checkpoints");
    fs::create_directories(cfg.run_dir + "/logs");
    fs::create_directories(cfg.run_dir + "/predictions");
    {
        std::ofstream manifest(cfg.run_dir + "/manifest.cfg", std::ios::trunc);
        check(manifest.good(), "train: cannot write manifest under ", cfg.run_dir);
        manifest << cfg.serialize();
        char buf[64];
        for (std::size_t c = 0; c < freq.size(); ++c) {
            std::snprintf(buf, sizeof buf, "derived.class_freq_%zu = %.17g\n", c, freq[c]);
            manifest << buf;
        }
    }
    std::ofstream log(cfg.run_dir + "/logs/loss.log", std::ios::trunc | std::ios::binary);
    check(log.good(), "train: cannot open loss log");

    const std::string echo = cfg.network_echo();
    const int iters_per_epoch =
        std::max(1, cfg.train_patches_per_epoch / std::max(1, cfg.train_batch));

    LabeledRaster val;
    bool have_val = false;
    if (!cfg.train_val_scene.empty()) {
        val = read_raster(cfg.train_val_scene);
        val.num_classes = cfg.net_classes;
        have_val = true;
    }
    double best_miou = -1.0;

    TrainResult result;
    result.run_dir = cfg.run_dir;

    for (int i = 1; i <= cfg.train_iterations; ++i) {
        const int epoch = (i - 1) / iters_per_epoch;
        auto batch = sample_patches(scene, cfg.train_batch, cfg.train_patch, rng_data);
        auto x = Tensor::from({batch.count, batch.bands, batch.size, batch.size},
                              std::move(batch.inputs), false);

        Tape tape;
        auto outputs = net.forward(&tape, x);

        JointLossSample sample;
        TensorPtr total;
        if (joint) {
            BatchTargets targets;
            targets.batch = batch.count;
            targets.num_classes = batch.num_classes;
            targets.height = batch.size;
            targets.width = batch.size;
            targets.seg = std::move(batch.seg);
            targets.binary = std::move(batch.binary);
            targets.presence = std::move(batch.presence);
            std::tie(total, sample) =
                joint_loss(i, outputs, targets, weights, cfg.pairing(), &tape, rng_loss);
        } else {
            // single-task training: auxiliary terms are zero but the
            // weights are still drawn, keeping Eq-style bookkeeping exact
            total = weighted_cross_entropy(&tape, outputs.full_seg, batch.seg, weights);
            sample.iteration = i;
            sample.w1 = rng_loss.uniform();
            sample.w2 = rng_loss.uniform();
            sample.l_mce = total->value();
            sample.l_bce = 0.0;
            sample.l_lovasz = 0.0;
            sample.l_total = (sample.l_mce + sample.w1 * 0.0) + sample.w2 * 0.0;
        }

        tape.backward(total);
        opt.step(sched.lr_at(epoch, false), sched.lr_at(epoch, true));
        for (auto& p : params) p.tensor->zero_grad();

        log << format_loss_line(sample) << "\n";
        result.samples.push_back(sample);

        if (progress && (i % 25 == 0 || i == 1))
            *progress << "iter " << i << "/" << cfg.train_iterations << " total "
                      << sample.l_total << "\n";

        const bool epoch_end = i % iters_per_epoch == 0;
        if (epoch_end && cfg.train_checkpoint_epochs) {
            save_network_checkpoint(cfg.run_dir + "/checkpoints/" + epoch_ckpt_name(epoch), net,
                                    &opt, echo);
            if (have_val) {
                const int div = net.cfg.required_divisor();
                int window = std::min(cfg.train_patch, std::min(val.height, val.width));
                window -= window % div;
                check(window >= div, "train: validation scene ", val.height, "x", val.width,
                      " is too small for the network divisor ", div);
                const auto rep = evaluate_scene(net, val, window, 0.0, false);
                net.set_training(true);
                if (rep.miou > best_miou) {
                    best_miou = rep.miou;
                    save_network_checkpoint(cfg.run_dir + "/checkpoints/best.ckpt", net, &opt,
                                            echo);
                }
            }
        }
    }
    save_network_checkpoint(cfg.run_dir + "/checkpoints/final.ckpt", net, &opt, echo);
    log.flush();
    check(log.good(), "train: loss log write failed");
    return result;
}

} // namespace ddcm
