#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace omd {

/// Checkpoint file layout (all integers and floats little-endian):
///   bytes 0..7   magic "OMDCKPT1"
///   bytes 8..11  uint32 section count
///   per section: uint32 name length, name bytes,
///                uint64 offset (in float64 units from payload start),
///                uint64 length (float64 count)
///   payload:     concatenated float64 data
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, std::span<const double>>>& sections);

std::map<std::string, std::vector<double>> load_checkpoint(const std::string& path);

}  // namespace omd
