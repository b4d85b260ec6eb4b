#pragma once

namespace cellprog {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cellprog
