#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddcm/checkpoint.hpp"
#include "ddcm/config.hpp"
#include "ddcm/gradcheck.hpp"
#include "ddcm/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "key=value config file");
    cmd->add_option("--set", o.overrides, "override a config key (repeatable)");
    cmd->add_option("--seed", o.seed, "override the run seed")->each([&o](const std::string&) {
        o.seed_set = true;
    });
}

ddcm::RunConfig resolve(const CommonOpts& o) {
    ddcm::RunConfig cfg =
        o.config_path.empty() ? ddcm::RunConfig{} : ddcm::RunConfig::from_file(o.config_path);
    for (const auto& kv : o.overrides) cfg.apply_override(kv);
    if (o.seed_set) cfg.seed = o.seed;
    return cfg;
}

int cmd_synth(const ddcm::RunConfig& cfg, const std::string& out_path) {
    ddcm::RngState rng(cfg.seed);
    auto scene = ddcm::synth_scene(cfg.synth_spec(), rng);
    ddcm::write_raster(out_path, scene.raster);
    ddcm::write_class_ppm(out_path + ".labels.ppm", scene.raster.labels, scene.raster.height,
                          scene.raster.width);
    std::cout << "wrote " << out_path << " (" << scene.raster.bands << " bands, "
              << scene.raster.height << "x" << scene.raster.width << ", "
              << scene.strokes.size() << " road strokes) and " << out_path << ".labels.ppm\n";
    return 0;
}

int cmd_train(const ddcm::RunConfig& cfg) {
    auto result = ddcm::train_run(cfg, &std::cout);
    std::cout << "finished " << result.samples.size() << " iterations; run directory "
              << result.run_dir << "\n";
    return 0;
}

int cmd_infer(const ddcm::RunConfig& cfg, const std::string& checkpoint,
              const std::string& scene_path, const std::string& out_dir) {
    auto scene = ddcm::read_raster(scene_path);
    scene.num_classes = cfg.net_classes;
    ddcm::RngState rng(cfg.seed);
    ddcm::JtDdcmNet net(cfg.network(), rng);
    ddcm::load_network_checkpoint(checkpoint, net, nullptr, cfg.network_echo());

    auto result =
        ddcm::infer_scene(net, scene, cfg.infer_window, cfg.infer_overlap, cfg.infer_tta);
    fs::create_directories(out_dir);

    ddcm::LabeledRaster probs;
    probs.bands = result.num_classes;
    probs.height = result.height;
    probs.width = result.width;
    probs.num_classes = result.num_classes;
    probs.data = result.probs;
    probs.labels = result.classes;
    ddcm::write_raster(out_dir + "/probs.ddcm", probs);
    ddcm::write_class_ppm(out_dir + "/classmap.ppm", result.classes, result.height,
                          result.width);
    std::cout << "wrote " << out_dir << "/probs.ddcm and " << out_dir << "/classmap.ppm\n";
    return 0;
}

int cmd_eval(const ddcm::RunConfig& cfg, const std::string& pred_path,
             const std::string& ref_path, const std::string& out_path) {
    auto pred = ddcm::read_raster(pred_path);
    auto ref = ddcm::read_raster(ref_path);
    ddcm::check(pred.has_labels(), "eval: prediction raster ", pred_path, " has no label plane");
    ddcm::check(ref.has_labels(), "eval: reference raster ", ref_path, " has no label plane");
    auto cm = ddcm::confusion(pred.labels, ref.labels, cfg.net_classes, cfg.eval_ignore);
    auto rep = ddcm::report(cm);
    std::cout << ddcm::format_report(rep, {"background", "Road1", "Road2", "Road3"});
    if (!out_path.empty()) {
        ddcm::write_metrics_kv(out_path, rep);
        std::cout << "wrote " << out_path << "\n";
    }
    return 0;
}

int cmd_gradcheck(const ddcm::RunConfig& cfg, int seeds) {
    auto rows = ddcm::run_gradcheck_suite(cfg.seed, seeds);
    bool all_pass = true;
    std::printf("%-24s %-12s %s\n", "op", "max rel err", "result");
    for (const auto& r : rows) {
        std::printf("%-24s %-12.3g %s\n", r.name.c_str(), r.max_rel_err,
                    r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    std::printf("%s\n", all_pass ? "all rows PASS" : "FAILURES present");
    return all_pass ? 0 : 1;
}

int cmd_summary(const ddcm::RunConfig& cfg, int size) {
    auto s = ddcm::summarize(cfg.network(), size, size);
    std::cout << ddcm::format_summary(s);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint-task dense dilated convolutions merging toolkit"};
    app.require_subcommand(1);

    CommonOpts synth_o, train_o, infer_o, eval_o, grad_o, summary_o;
    std::string synth_out, infer_ckpt, infer_scene, infer_out, eval_pred, eval_ref, eval_out;
    int grad_seeds = 5;
    int summary_size = 256;

    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled scene");
    add_common(synth, synth_o);
    synth->add_option("--out", synth_out, "output raster path")->required();

    auto* train = app.add_subcommand("train", "train on a labeled scene");
    add_common(train, train_o);

    auto* infer = app.add_subcommand("infer", "sliding-window inference over a scene");
    add_common(infer, infer_o);
    infer->add_option("--checkpoint", infer_ckpt, "checkpoint to load")->required();
    infer->add_option("--scene", infer_scene, "input raster")->required();
    infer->add_option("--out-dir", infer_out, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "confusion-matrix metrics for a prediction");
    add_common(eval, eval_o);
    eval->add_option("--pred", eval_pred, "predicted raster (label plane)")->required();
    eval->add_option("--ref", eval_ref, "reference raster (label plane)")->required();
    eval->add_option("--out", eval_out, "write key=value metrics here");

    auto* grad =
        app.add_subcommand("gradcheck", "finite-difference checks for layers and losses");
    add_common(grad, grad_o);
    grad->add_option("--seeds", grad_seeds, "random restarts per op");

    auto* summary = app.add_subcommand("summary", "parameter and MAC table");
    add_common(summary, summary_o);
    summary->add_option("--size", summary_size, "square input size for the MAC estimate");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(resolve(synth_o), synth_out);
        if (train->parsed()) return cmd_train(resolve(train_o));
        if (infer->parsed())
            return cmd_infer(resolve(infer_o), infer_ckpt, infer_scene, infer_out);
        if (eval->parsed()) return cmd_eval(resolve(eval_o), eval_pred, eval_ref, eval_out);
        if (grad->parsed()) return cmd_gradcheck(resolve(grad_o), grad_seeds);
        if (summary->parsed()) return cmd_summary(resolve(summary_o), summary_size);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
