#pragma once

namespace volsr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace volsr
