#pragma once

namespace trajscore {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace trajscore
