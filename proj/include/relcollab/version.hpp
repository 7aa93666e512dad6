#pragma once

namespace relcollab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace relcollab
