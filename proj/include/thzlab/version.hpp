#pragma once

namespace thzlab {
inline constexpr const char* kVersion = "0.1.0";
}
