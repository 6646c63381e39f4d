#pragma once

namespace hrl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hrl
