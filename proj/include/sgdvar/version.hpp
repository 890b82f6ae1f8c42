#pragma once

namespace sgdvar {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace sgdvar
