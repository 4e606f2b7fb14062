#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tokenwarp/attention.hpp"
#include "tokenwarp/types.hpp"

namespace tokenwarp {

// TKWP layout, all integers little-endian:
//   "TKWP" | u32 version = 1 | u8 dtype (1 = f32) | u8 ndim | ndim x u64 dims | f32 payload
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 1;
inline constexpr int kMaxRank = 4;

/// Untyped row-major f32 tensor as stored in a container.
struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> values;

  std::uint64_t element_count() const noexcept;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// How a container's dims are interpreted.
enum class TensorRole { video, tokens, flow, mask };

std::vector<std::uint8_t> encode_container(const Tensor& tensor);
/// Throws FormatError (with the failing offset) on bad magic, version,
/// dtype, rank or a truncated payload.
Tensor decode_container(std::span<const std::uint8_t> bytes);

/// Writes to a temporary sibling and renames it into place, so a failed
/// write never leaves a partial file at `path`.
void write_container(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_container(const std::filesystem::path& path);

// Role mappings: video [n,h,w,c], tokens [h,w,d], flow [h,w,2] with (u,v)
// interleaved, mask [h,w], attention weights [heads,queries,keys].
Tensor to_tensor(const VideoTensor& video);
Tensor to_tensor(const TokenGrid& grid);
Tensor to_tensor(const FlowField& flow);
Tensor to_tensor(const OcclusionMask& mask);
Tensor attention_weights_tensor(const AttentionProbe& probe);

VideoTensor as_video(const Tensor& t);
TokenGrid as_tokens(const Tensor& t);
FlowField as_flow(const Tensor& t);
OcclusionMask as_mask(const Tensor& t);

}  // namespace tokenwarp
