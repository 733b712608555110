#pragma once

namespace mf4d {

inline constexpr const char* version_string = "mf4d 0.1.0";

}  // namespace mf4d
