#pragma once

#define FLARE_VERSION_MAJOR 0
#define FLARE_VERSION_MINOR 1
#define FLARE_VERSION_PATCH 0

namespace flare {

inline constexpr const char* version() { return "0.1.0"; }

}  // namespace flare
