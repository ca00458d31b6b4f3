#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

namespace volsr {

/// 8-bit grayscale PNG, row-major, top row first.
void write_gray8_png(const std::filesystem::path& path, int width, int height,
                     std::span<const std::uint8_t> pixels);

}  // namespace volsr
