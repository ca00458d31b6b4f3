#pragma once

#include <filesystem>

#include "volsr/volume.hpp"

namespace volsr {

// VOL1 container: little-endian throughout.
//   magic "VOL1" (4 bytes)
//   uint32 header length
//   UTF-8 JSON header {"dims":[nx,ny,nz],"spacing":[sx,sy,sz],"dtype":"f32"}
//   payload: nx*ny*nz float32 values, x-fastest. No compression.

Volume read_volume(const std::filesystem::path& path);
void write_volume(const std::filesystem::path& path, const Volume& v);

}  // namespace volsr
