#pragma once

#include "divsynth/parameters.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace divsynth {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Wire format (all integers little-endian):
///   "DSYN" u32 version u32 count
///   count x { u16 name_len, name bytes, u8 ndim, u32 dims[ndim], f32 payload }
std::string encode_checkpoint(const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);

void checkpoint_save(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> checkpoint_load(const std::filesystem::path& path);

const NamedTensor& find_entry(const std::vector<NamedTensor>& entries, std::string_view name);
bool has_entry(const std::vector<NamedTensor>& entries, std::string_view name);

// Non-float state rides in ordinary f32 tensors using values that f32
// represents exactly: text as one byte per element, 64-bit integers as four
// 16-bit limbs.
Tensor<float> pack_text(std::string_view text);
std::string unpack_text(const Tensor<float>& t);
Tensor<float> pack_u64(std::uint64_t v);
std::uint64_t unpack_u64(const Tensor<float>& t);

} // namespace divsynth
