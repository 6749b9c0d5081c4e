#pragma once

namespace tokenmark {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace tokenmark
