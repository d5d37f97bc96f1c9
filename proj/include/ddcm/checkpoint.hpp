#pragma once

#include <map>
#include <string>
#include <vector>

#include "ddcm/arch.hpp"
#include "ddcm/optim.hpp"

namespace ddcm {

// Checkpoint container, little-endian:
//   bytes 0-7  magic "DDCMCKPT"
//   u32 version (currently 1)
//   u32 config echo length, then that many bytes of key=value text
//   u32 tensor count, then per tensor:
//     u32 name length, name bytes, u32 ndim, ndim x i32 dims, f64 data.
// Holds the named network parameters, BN running statistics, and (when an
// optimizer is supplied) its moment buffers and step counter, so training
// resumes exactly.

struct NamedArray {
    std::string name;
    std::vector<int> shape;
    const std::vector<double>* values;
};

void save_checkpoint(const std::string& path, const std::string& config_echo,
                     const std::vector<NamedArray>& arrays);

struct LoadedCheckpoint {
    std::string config_echo;
    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<int>, std::vector<double>>> tensors;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

void save_network_checkpoint(const std::string& path, JtDdcmNet& net, AdamAmsgrad* optimizer,
                             const std::string& config_echo);

// Restores parameters and buffers into an already-built network; the
// checkpoint's config echo must match config_echo exactly, and every
// tensor shape is validated. Optimizer state is restored when an
// optimizer is passed and the checkpoint carries one.
void load_network_checkpoint(const std::string& path, JtDdcmNet& net, AdamAmsgrad* optimizer,
                             const std::string& config_echo);

} // namespace ddcm
