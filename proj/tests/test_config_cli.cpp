#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ddcm/config.hpp"
#include "ddcm/trainer.hpp"
#include "test_util.hpp"

using namespace ddcm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// desk-scale config on a small synthetic scene
RunConfig tiny_train_config(const std::string& scene, const std::string& run_dir) {
    RunConfig cfg;
    cfg.seed = 4242;
    cfg.run_dir = run_dir;
    cfg.train_scene = scene;
    cfg.net_low_dilations = {1, 2};
    cfg.net_low_growth = 4;
    cfg.net_low_merge = 8;
    cfg.net_high_dilations = {1, 2};
    cfg.net_high_growth = 4;
    cfg.net_high_merge = 8;
    cfg.net_high2_dilations = {1};
    cfg.net_high2_growth = 4;
    cfg.net_high2_merge = 8;
    cfg.net_backbone_width = 2;
    cfg.net_backbone_blocks = {1};
    cfg.net_backbone_strides = {2};
    cfg.net_stem_pool = false;
    cfg.train_iterations = 6;
    cfg.train_batch = 1;
    cfg.train_patch = 32;
    cfg.train_patches_per_epoch = 3;
    cfg.train_lr = 0.001;
    return cfg;
}

std::string make_scene_file(std::uint64_t seed) {
    SynthSpec spec;
    spec.height = 256;
    spec.width = 256;
    spec.roads_per_class = {2, 2, 2};
    RngState rng(seed);
    auto scene = synth_scene(spec, rng);
    const auto path = (fs::temp_directory_path() / "ddcm_test_scene.ddcm").string();
    write_raster(path, scene.raster);
    return path;
}

} // namespace

TEST_CASE("config serialization round-trips byte for byte") {
    RunConfig cfg;
    cfg.seed = 99;
    cfg.net_low_growth = 12;
    cfg.train_lr = 0.00012;
    const auto text = cfg.serialize();
    auto back = RunConfig::from_text(text, "roundtrip");
    CHECK(back.serialize() == text);
    CHECK(back.seed == 99);
    CHECK(back.net_low_growth == 12);
}

TEST_CASE("config parser reports unknown keys and bad values with line numbers") {
    const auto msg = ddcm_test::error_message(
        [] { RunConfig::from_text("net.bands = 2\nnot.a.key = 1\n", "cfg"); });
    CHECK(msg.find("cfg:2") != std::string::npos);
    CHECK(msg.find("unknown key") != std::string::npos);
    CHECK_THROWS_WITH_AS(RunConfig::from_text("net.bands = banana\n", "cfg"),
                         doctest::Contains("cfg:1"), Error);
    CHECK_THROWS_WITH_AS(RunConfig::from_text("seed 12\n", "cfg"),
                         doctest::Contains("key = value"), Error);
    // comments, blanks and derived keys are accepted
    auto cfg = RunConfig::from_text("# comment\n\nderived.class_freq_0 = 5\nseed = 7\n", "cfg");
    CHECK(cfg.seed == 7);
}

TEST_CASE("--set overrides and the config fields map to the network") {
    RunConfig cfg;
    cfg.apply_override("net.low_dilations=1,2,3");
    cfg.apply_override("net.head_binary=false");
    CHECK_THROWS_AS(cfg.apply_override("nonsense"), Error);
    CHECK_THROWS_AS(cfg.apply_override("bad.key=1"), Error);
    auto net = cfg.network();
    CHECK(net.low_dilations == std::vector<int>{1, 2, 3});
    CHECK_FALSE(net.head_binary);

    CHECK(cfg.pairing() == BcePairing::Presence);
    cfg.loss_pairing = "presence_and_binary_bce";
    CHECK(cfg.pairing() == BcePairing::PresenceAndBinary);
    cfg.loss_pairing = "nope";
    CHECK_THROWS_AS(cfg.pairing(), Error);
}

TEST_CASE("single-iteration training logs exactly one joint sample") {
    const auto scene = make_scene_file(404);
    auto cfg = tiny_train_config(scene, (fs::temp_directory_path() / "ddcm_run_one").string());
    cfg.train_iterations = 1;
    auto result = train_run(cfg);
    REQUIRE(result.samples.size() == 1);
    const auto& s = result.samples[0];
    CHECK(s.iteration == 1);
    CHECK(s.w1 >= 0.0);
    CHECK(s.w1 <= 1.0);
    CHECK(s.w2 >= 0.0);
    CHECK(s.w2 <= 1.0);
    CHECK(s.l_total == (s.l_mce + s.w1 * s.l_bce) + s.w2 * s.l_lovasz);

    const auto log = slurp(cfg.run_dir + "/logs/loss.log");
    std::istringstream is(log);
    std::string line;
    int lines = 0;
    while (std::getline(is, line))
        if (!line.empty()) {
            ++lines;
            auto parsed = parse_loss_line(line);
            CHECK(parsed.l_total == s.l_total);
        }
    CHECK(lines == 1);
    fs::remove_all(cfg.run_dir);
    fs::remove(scene);
}

TEST_CASE("two identical manifests train to byte-identical logs and checkpoints") {
    const auto scene = make_scene_file(405);
    auto cfg1 = tiny_train_config(scene, (fs::temp_directory_path() / "ddcm_run_da").string());
    auto cfg2 = tiny_train_config(scene, (fs::temp_directory_path() / "ddcm_run_db").string());
    train_run(cfg1);
    train_run(cfg2);

    CHECK(slurp(cfg1.run_dir + "/logs/loss.log") == slurp(cfg2.run_dir + "/logs/loss.log"));
    CHECK(slurp(cfg1.run_dir + "/checkpoints/final.ckpt") ==
          slurp(cfg2.run_dir + "/checkpoints/final.ckpt"));

    // the manifest alone reproduces the run
    auto replay = RunConfig::from_file(cfg1.run_dir + "/manifest.cfg");
    replay.run_dir = (fs::temp_directory_path() / "ddcm_run_dc").string();
    train_run(replay);
    CHECK(slurp(replay.run_dir + "/logs/loss.log") == slurp(cfg1.run_dir + "/logs/loss.log"));

    fs::remove_all(cfg1.run_dir);
    fs::remove_all(cfg2.run_dir);
    fs::remove_all(replay.run_dir);
    fs::remove(scene);
}

TEST_CASE("training writes the documented run layout and epoch checkpoints") {
    const auto scene = make_scene_file(406);
    auto cfg = tiny_train_config(scene, (fs::temp_directory_path() / "ddcm_run_layout").string());
    cfg.train_iterations = 6;
    cfg.train_patches_per_epoch = 3; // 2 full epochs
    train_run(cfg);
    CHECK(fs::exists(cfg.run_dir + "/manifest.cfg"));
    CHECK(fs::exists(cfg.run_dir + "/logs/loss.log"));
    CHECK(fs::exists(cfg.run_dir + "/predictions"));
    CHECK(fs::exists(cfg.run_dir + "/checkpoints/epoch_0000.ckpt"));
    CHECK(fs::exists(cfg.run_dir + "/checkpoints/epoch_0001.ckpt"));
    CHECK(fs::exists(cfg.run_dir + "/checkpoints/final.ckpt"));

    const auto manifest = slurp(cfg.run_dir + "/manifest.cfg");
    CHECK(manifest.find("derived.class_freq_0") != std::string::npos);
    fs::remove_all(cfg.run_dir);
    fs::remove(scene);
}

TEST_CASE("single-task config trains full segmentation only") {
    const auto scene = make_scene_file(407);
    auto cfg = tiny_train_config(scene, (fs::temp_directory_path() / "ddcm_run_single").string());
    cfg.net_head_binary = false;
    cfg.net_head_presence = false;
    cfg.train_iterations = 2;
    auto result = train_run(cfg);
    for (const auto& s : result.samples) {
        CHECK(s.l_bce == 0.0);
        CHECK(s.l_lovasz == 0.0);
        CHECK(s.l_total == s.l_mce);
    }
    fs::remove_all(cfg.run_dir);
    fs::remove(scene);
}

TEST_CASE("missing scene and missing labels are reported") {
    RunConfig cfg;
    cfg.train_scene = "/nonexistent/scene.ddcm";
    CHECK_THROWS_WITH_AS(train_run(cfg), doctest::Contains("cannot open"), Error);
    cfg.train_scene = "";
    CHECK_THROWS_WITH_AS(train_run(cfg), doctest::Contains("train.scene"), Error);
}

TEST_CASE("evaluate_scene on a perfectly matching prediction reports unity") {
    // reference self-comparison through the confusion pipeline
    std::vector<std::uint8_t> labels(64 * 64);
    RngState rng(408);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.next_below(4));
    auto cm = confusion(labels, labels, 4);
    auto rep = report(cm);
    CHECK(rep.oa == 1.0);
    CHECK(rep.miou == 1.0);
}
