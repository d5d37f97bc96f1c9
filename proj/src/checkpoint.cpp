#include "ddcm/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace ddcm {

namespace {

constexpr char kMagic[8] = {'D', 'D', 'C', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& f, std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(const std::string& b, std::size_t& off, const std::string& path) {
    check(off + 4 <= b.size(), "checkpoint ", path, ": truncated at byte ", off);
    std::uint32_t v = 0;
    std::memcpy(&v, b.data() + off, 4);
    off += 4;
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const std::string& config_echo,
                     const std::vector<NamedArray>& arrays) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check(f.good(), "save_checkpoint: cannot open ", path);
    f.write(kMagic, 8);
    put_u32(f, kVersion);
    put_u32(f, static_cast<std::uint32_t>(config_echo.size()));
    f.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
    put_u32(f, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        std::int64_t n = 1;
        for (int d : a.shape) n *= d;
        check(n == static_cast<std::int64_t>(a.values->size()), "save_checkpoint: ", a.name,
              " shape/data mismatch");
        put_u32(f, static_cast<std::uint32_t>(a.name.size()));
        f.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        put_u32(f, static_cast<std::uint32_t>(a.shape.size()));
        for (int d : a.shape) {
            const std::int32_t d32 = d;
            f.write(reinterpret_cast<const char*>(&d32), 4);
        }
        f.write(reinterpret_cast<const char*>(a.values->data()),
                static_cast<std::streamsize>(a.values->size() * sizeof(double)));
    }
    check(f.good(), "save_checkpoint: write failed for ", path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "load_checkpoint: cannot open ", path);
    std::string b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    check(b.size() >= 12 && std::memcmp(b.data(), kMagic, 8) == 0, "checkpoint ", path,
          ": bad magic");
    std::size_t off = 8;
    const auto version = get_u32(b, off, path);
    check(version == kVersion, "checkpoint ", path, ": unsupported version ", version);
    const auto cfg_len = get_u32(b, off, path);
    check(off + cfg_len <= b.size(), "checkpoint ", path, ": truncated config echo");
    LoadedCheckpoint out;
    out.config_echo = b.substr(off, cfg_len);
    off += cfg_len;
    const auto count = get_u32(b, off, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = get_u32(b, off, path);
        check(off + name_len <= b.size(), "checkpoint ", path, ": truncated tensor name");
        std::string name = b.substr(off, name_len);
        off += name_len;
        const auto ndim = get_u32(b, off, path);
        std::vector<int> shape(ndim);
        std::int64_t n = 1;
        for (auto& d : shape) {
            check(off + 4 <= b.size(), "checkpoint ", path, ": truncated dims for ", name);
            std::int32_t d32 = 0;
            std::memcpy(&d32, b.data() + off, 4);
            off += 4;
            d = d32;
            n *= d32;
        }
        check(n >= 0 && off + static_cast<std::size_t>(n) * sizeof(double) <= b.size(),
              "checkpoint ", path, ": truncated data for ", name);
        std::vector<double> values(n);
        std::memcpy(values.data(), b.data() + off, static_cast<std::size_t>(n) * sizeof(double));
        off += static_cast<std::size_t>(n) * sizeof(double);
        out.order.push_back(name);
        out.tensors.emplace(std::move(name), std::make_pair(std::move(shape), std::move(values)));
    }
    check(off == b.size(), "checkpoint ", path, ": ", b.size() - off, " trailing bytes");
    return out;
}

void save_network_checkpoint(const std::string& path, JtDdcmNet& net, AdamAmsgrad* optimizer,
                             const std::string& config_echo) {
    std::vector<NamedArray> arrays;
    const auto params = net.params();
    for (const auto& p : params) arrays.push_back({p.name, p.tensor->shape, &p.tensor->data});
    for (const auto& b : net.buffers())
        arrays.push_back({b.name, {static_cast<int>(b.values->size())}, b.values});
    std::vector<double> step_holder;
    std::vector<std::vector<double>> keep_alive;
    if (optimizer) {
        for (const auto& s : optimizer->state())
            arrays.push_back({s.name, {static_cast<int>(s.values->size())}, s.values});
        step_holder = {static_cast<double>(optimizer->step_count())};
        arrays.push_back({"optim.t", {1}, &step_holder});
    }
    save_checkpoint(path, config_echo, arrays);
}

void load_network_checkpoint(const std::string& path, JtDdcmNet& net, AdamAmsgrad* optimizer,
                             const std::string& config_echo) {
    auto ckpt = load_checkpoint(path);
    check(ckpt.config_echo == config_echo, "checkpoint ", path,
          ": config echo does not match the current network configuration");
    auto fetch = [&](const std::string& name, const std::vector<int>& shape) -> const std::vector<double>& {
        auto it = ckpt.tensors.find(name);
        check(it != ckpt.tensors.end(), "checkpoint ", path, ": missing tensor ", name);
        check(it->second.first == shape, "checkpoint ", path, ": tensor ", name, " has shape ",
              shape_str(it->second.first), ", network expects ", shape_str(shape));
        return it->second.second;
    };
    for (const auto& p : net.params()) p.tensor->data = fetch(p.name, p.tensor->shape);
    for (const auto& b : net.buffers())
        *b.values = fetch(b.name, {static_cast<int>(b.values->size())});
    if (optimizer) {
        for (const auto& s : optimizer->state())
            *s.values = fetch(s.name, {static_cast<int>(s.values->size())});
        const auto& t = fetch("optim.t", {1});
        optimizer->set_step_count(static_cast<std::int64_t>(t[0]));
    }
}

} // namespace ddcm
