#include "ddcm/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace ddcm {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string& v) {
    try {
        std::size_t pos = 0;
        const int x = std::stoi(v, &pos);
        check(pos == v.size(), "");
        return x;
    } catch (const std::exception&) {
        fail("expected an integer, got '", v, "'");
    }
}

std::uint64_t to_u64(const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        check(pos == v.size(), "");
        return static_cast<std::uint64_t>(x);
    } catch (const std::exception&) {
        fail("expected an unsigned integer, got '", v, "'");
    }
}

double to_double(const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        check(pos == v.size(), "");
        return x;
    } catch (const std::exception&) {
        fail("expected a number, got '", v, "'");
    }
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("expected true/false, got '", v, "'");
}

std::vector<int> to_int_list(const std::string& v) {
    std::vector<int> out;
    std::string item;
    std::istringstream is(v);
    while (std::getline(is, item, ',')) out.push_back(to_int(trim(item)));
    check(!out.empty(), "expected a comma-separated integer list, got '", v, "'");
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_int_list(const std::vector<int>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ',';
        os << v[i];
    }
    return os.str();
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::vector<Field> build_fields() {
    std::vector<Field> f;
    auto I = [&](const char* k, int RunConfig::* m) {
        f.push_back({k, [m](RunConfig& c, const std::string& v) { c.*m = to_int(v); },
                     [m](const RunConfig& c) { return std::to_string(c.*m); }});
    };
    auto D = [&](const char* k, double RunConfig::* m) {
        f.push_back({k, [m](RunConfig& c, const std::string& v) { c.*m = to_double(v); },
                     [m](const RunConfig& c) { return fmt_double(c.*m); }});
    };
    auto B = [&](const char* k, bool RunConfig::* m) {
        f.push_back({k, [m](RunConfig& c, const std::string& v) { c.*m = to_bool(v); },
                     [m](const RunConfig& c) { return c.*m ? "true" : "false"; }});
    };
    auto S = [&](const char* k, std::string RunConfig::* m) {
        f.push_back({k, [m](RunConfig& c, const std::string& v) { c.*m = v; },
                     [m](const RunConfig& c) { return c.*m; }});
    };
    auto L = [&](const char* k, std::vector<int> RunConfig::* m) {
        f.push_back({k, [m](RunConfig& c, const std::string& v) { c.*m = to_int_list(v); },
                     [m](const RunConfig& c) { return fmt_int_list(c.*m); }});
    };

    f.push_back({"seed",
                 [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    S("run_dir", &RunConfig::run_dir);

    I("net.bands", &RunConfig::net_bands);
    I("net.classes", &RunConfig::net_classes);
    I("net.kernel", &RunConfig::net_kernel);
    L("net.low_dilations", &RunConfig::net_low_dilations);
    I("net.low_growth", &RunConfig::net_low_growth);
    I("net.low_merge", &RunConfig::net_low_merge);
    L("net.high_dilations", &RunConfig::net_high_dilations);
    I("net.high_growth", &RunConfig::net_high_growth);
    I("net.high_merge", &RunConfig::net_high_merge);
    L("net.high2_dilations", &RunConfig::net_high2_dilations);
    I("net.high2_growth", &RunConfig::net_high2_growth);
    I("net.high2_merge", &RunConfig::net_high2_merge);
    I("net.backbone_width", &RunConfig::net_backbone_width);
    L("net.backbone_blocks", &RunConfig::net_backbone_blocks);
    L("net.backbone_strides", &RunConfig::net_backbone_strides);
    B("net.stem_pool", &RunConfig::net_stem_pool);
    B("net.head_binary", &RunConfig::net_head_binary);
    B("net.head_presence", &RunConfig::net_head_presence);

    S("loss.pairing", &RunConfig::loss_pairing);

    S("train.scene", &RunConfig::train_scene);
    S("train.val_scene", &RunConfig::train_val_scene);
    I("train.iterations", &RunConfig::train_iterations);
    I("train.batch", &RunConfig::train_batch);
    I("train.patch", &RunConfig::train_patch);
    I("train.patches_per_epoch", &RunConfig::train_patches_per_epoch);
    D("train.lr", &RunConfig::train_lr);
    L("train.lr_milestones", &RunConfig::train_lr_milestones);
    D("train.lr_factor", &RunConfig::train_lr_factor);
    D("train.bias_lr_mult", &RunConfig::train_bias_lr_mult);
    D("train.weight_decay", &RunConfig::train_weight_decay);
    B("train.decoupled_decay", &RunConfig::train_decoupled_decay);
    D("train.beta1", &RunConfig::train_beta1);
    D("train.beta2", &RunConfig::train_beta2);
    D("train.eps", &RunConfig::train_eps);
    B("train.checkpoint_epochs", &RunConfig::train_checkpoint_epochs);

    I("synth.height", &RunConfig::synth_height);
    I("synth.width", &RunConfig::synth_width);
    I("synth.roads1", &RunConfig::synth_roads1);
    I("synth.roads2", &RunConfig::synth_roads2);
    I("synth.roads3", &RunConfig::synth_roads3);
    D("synth.width1_min", &RunConfig::synth_width1_min);
    D("synth.width1_max", &RunConfig::synth_width1_max);
    D("synth.width2_min", &RunConfig::synth_width2_min);
    D("synth.width2_max", &RunConfig::synth_width2_max);
    D("synth.width3_min", &RunConfig::synth_width3_min);
    D("synth.width3_max", &RunConfig::synth_width3_max);
    D("synth.noise", &RunConfig::synth_noise);

    I("infer.window", &RunConfig::infer_window);
    D("infer.overlap", &RunConfig::infer_overlap);
    B("infer.tta", &RunConfig::infer_tta);
    I("eval.ignore", &RunConfig::eval_ignore);

    std::sort(f.begin(), f.end(), [](const Field& a, const Field& b) { return a.key < b.key; });
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = build_fields();
    return f;
}

const Field* find_field(const std::string& key) {
    for (const auto& f : fields())
        if (f.key == key) return &f;
    return nullptr;
}

void apply_pair(RunConfig& cfg, const std::string& key, const std::string& value,
                const std::string& where) {
    if (key.rfind("derived.", 0) == 0) return; // manifest output, ignored on input
    const Field* f = find_field(key);
    check(f != nullptr, where, ": unknown key '", key, "'");
    try {
        f->set(cfg, value);
    } catch (const Error& e) {
        fail(where, ": ", key, ": ", e.what());
    }
}

} // namespace

NetworkConfig RunConfig::network() const {
    NetworkConfig n;
    n.input_bands = net_bands;
    n.num_classes = net_classes;
    n.kernel = net_kernel;
    n.low_dilations = net_low_dilations;
    n.low_growth = net_low_growth;
    n.low_merge = net_low_merge;
    n.high_dilations = net_high_dilations;
    n.high_growth = net_high_growth;
    n.high_merge = net_high_merge;
    n.high2_dilations = net_high2_dilations;
    n.high2_growth = net_high2_growth;
    n.high2_merge = net_high2_merge;
    n.backbone_width = net_backbone_width;
    n.backbone_blocks = net_backbone_blocks;
    n.backbone_strides = net_backbone_strides;
    n.stem_pool = net_stem_pool;
    n.head_binary = net_head_binary;
    n.head_presence = net_head_presence;
    return n;
}

BcePairing RunConfig::pairing() const {
    if (loss_pairing == "presence_bce") return BcePairing::Presence;
    if (loss_pairing == "presence_and_binary_bce") return BcePairing::PresenceAndBinary;
    fail("loss.pairing must be presence_bce or presence_and_binary_bce, got '", loss_pairing,
         "'");
}

SynthSpec RunConfig::synth_spec() const {
    SynthSpec s;
    s.height = synth_height;
    s.width = synth_width;
    s.num_classes = net_classes;
    s.roads_per_class = {synth_roads1, synth_roads2, synth_roads3};
    s.width_ranges = {{{synth_width1_min, synth_width1_max},
                       {synth_width2_min, synth_width2_max},
                       {synth_width3_min, synth_width3_max}}};
    s.noise = synth_noise;
    return s;
}

std::string RunConfig::serialize() const {
    std::ostringstream os;
    for (const auto& f : fields()) os << f.key << " = " << f.get(*this) << "\n";
    return os.str();
}

std::string RunConfig::network_echo() const {
    std::ostringstream os;
    for (const auto& f : fields())
        if (f.key.rfind("net.", 0) == 0) os << f.key << " = " << f.get(*this) << "\n";
    return os.str();
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        std::ostringstream where;
        where << origin << ":" << lineno;
        check(eq != std::string::npos, where.str(), ": expected 'key = value', got '", t, "'");
        apply_pair(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)), where.str());
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "config: cannot open ", path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_text(text, path);
}

void RunConfig::apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    check(eq != std::string::npos, "--set expects key=value, got '", kv, "'");
    std::string key = trim(kv.substr(0, eq));
    std::string value = trim(kv.substr(eq + 1));
    apply_pair(*this, key, value, "--set " + kv);
}

} // namespace ddcm
