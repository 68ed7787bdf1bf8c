#pragma once

namespace negrasp {

inline constexpr const char* kVersionString = "0.1.0";

}  // namespace negrasp
