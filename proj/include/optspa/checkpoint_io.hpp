#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "optspa/model.hpp"
#include "optspa/tensor.hpp"

namespace optspa {

// Container layout (little-endian):
//   "OPSC" | u32 version=1 | u32 metadata_len | metadata ("key=value\n" lines)
//   u32 n_tensors | per tensor: u32 name_len, name, u8 dtype (0=f32), u8 rank (2),
//   u64 dims[rank], f32 payload row-major
inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<std::pair<std::string, Tensor2D>> tensors;
};

std::vector<std::uint8_t> encode_container(const Container& c);
// Throws format_error with the byte offset of the first bad field.
Container decode_container(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Calibration stats reuse the container; each norm vector is a 1 x n tensor.
void save_calibration(const std::filesystem::path& path, const CalibrationStats& stats);
CalibrationStats load_calibration(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace optspa
