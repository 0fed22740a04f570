#pragma once

// Binary checkpoint layout (all integers little-endian):
//
//   "FGKD"            4 bytes magic
//   version           u16 (currently 1)
//   layer count       u16  (number of widths, input and output included)
//   widths            u32 each
//   parameters        f32 each, flat ParamVector order
//
// Training runs in double; parameters are narrowed to float on save.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fedgkd/nn.hpp"

namespace fedgkd {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
    std::vector<std::size_t> layer_widths;
    ParamVector params;  // float-rounded values widened back to double
};

std::vector<std::uint8_t> encode_checkpoint(const MlpSpec& spec, const ParamVector& params);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const MlpSpec& spec,
                     const ParamVector& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fedgkd
