#pragma once

#include "ptocluster/predictor.hpp"

#include <filesystem>
#include <string>

namespace ptoc {

// Binary parameter checkpoint, little-endian:
//   "PTOCCKPT" | u32 version | i32 n, window, gcn_width, filters, fc1, fc2 |
//   f64 input_scale | u32 tensor count |
//   per tensor: u32 name length, name, u32 rank (2), u64 rows, u64 cols,
//               rows*cols f64 values in row-major order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const PredictorParams& params);
PredictorParams decode_checkpoint(const std::string& bytes);

void save_checkpoint(const PredictorParams& params, const std::filesystem::path& path);
PredictorParams load_checkpoint(const std::filesystem::path& path);

}  // namespace ptoc
