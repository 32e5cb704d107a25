#pragma once

namespace hsdc {
inline constexpr const char* kVersion = "0.1.0";
}
