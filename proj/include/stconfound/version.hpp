#pragma once

namespace stconfound {

inline constexpr const char* software_name = "stconfound";
inline constexpr const char* software_version = "0.1.0";

}  // namespace stconfound
