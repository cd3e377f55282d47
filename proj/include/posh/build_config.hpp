#pragma once

// Build-profile switches. CMake passes POSH_SAFE / POSH_DEBUG as 0 or 1 and the
// algorithm selections as POSH_*_ID tokens; code guarded by these constants is
// discarded by the compiler when the feature is off.

#ifndef POSH_SAFE
#define POSH_SAFE 1
#endif
#ifndef POSH_DEBUG
#define POSH_DEBUG 0
#endif

namespace posh {

inline constexpr bool kSafeMode = POSH_SAFE != 0;
inline constexpr bool kDebugMode = POSH_DEBUG != 0;

}  // namespace posh
