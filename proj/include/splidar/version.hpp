#pragma once

namespace splidar {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace splidar
