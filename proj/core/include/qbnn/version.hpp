#pragma once

namespace qbnn {

inline constexpr const char* kVersion = "0.1.0";

} // namespace qbnn
