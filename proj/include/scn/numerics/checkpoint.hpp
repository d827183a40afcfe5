#pragma once

#include "scn/numerics/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace scn {

/// Named parameter blobs. Ordered by name so archives are byte-stable.
template <typename Scalar>
using ParameterMap = std::map<std::string, Tensor<Scalar>>;

/// Archive layout:
///   "SCNCKPT\0", u32 version, u32 bytes-per-float (4 or 8), u64 entry count,
///   then per entry: u32 name length, name, u32 rank, u64 extents[rank],
///   payload floats. Everything little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const ParameterMap<Scalar>& params);

/// Reads an archive written with either float width, converting to Scalar.
template <typename Scalar>
ParameterMap<Scalar> load_checkpoint(const std::filesystem::path& path);

/// Copies archived values into existing tensors, checking names and shapes.
template <typename Scalar>
void restore_parameters(const ParameterMap<Scalar>& archived, ParameterMap<Scalar>& live);

}  // namespace scn
