#pragma once

#include <map>
#include <string>
#include <vector>

#include "seglab/graph.hpp"
#include "seglab/tensor.hpp"

namespace seglab {

// Flat little-endian weight checkpoint.
//
//   u32 magic ("SGCK"), u32 version (1), u32 tensor count,
//   then per tensor: u32 name length, name bytes, u32 rank,
//   u32 extents[rank], f64 values[product of extents].
inline constexpr std::uint32_t kCheckpointMagic = 0x4b434753u;  // "SGCK"
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<const Param*>& params);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

// Assigns checkpoint tensors into params by name. Throws if a parameter is
// missing from the file or shapes disagree.
void load_into(const std::map<std::string, Tensor>& state, const std::vector<Param*>& params);

}  // namespace seglab
