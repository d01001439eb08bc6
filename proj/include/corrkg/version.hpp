#pragma once

namespace corrkg {
inline constexpr const char* kVersion = "0.1.0";
}
