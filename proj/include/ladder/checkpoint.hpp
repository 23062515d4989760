#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ladder/tensor.hpp"

namespace ladder {

// Binary container used for every persisted tensor:
//   "LDDR" | u16 version | u32 count | entries...
//   entry: u16 name_len | name (UTF-8) | u8 rank | u32 dims[rank] | f32 payload
// All integers and floats little-endian.
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

std::string encode_checkpoint(std::span<const NamedTensor> entries);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> entries);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Throws a format error naming the missing entry.
const Tensor& find_entry(std::span<const NamedTensor> entries, std::string_view name);

}  // namespace ladder
