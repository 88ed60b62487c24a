#pragma once

namespace hscls {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace hscls
