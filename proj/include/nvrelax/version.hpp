#pragma once

#define NVRELAX_VERSION "0.1.0"

namespace nvrelax {
inline const char* version() { return NVRELAX_VERSION; }
}  // namespace nvrelax
