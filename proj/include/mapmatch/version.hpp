#pragma once

namespace mapmatch {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mapmatch
