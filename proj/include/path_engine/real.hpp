#pragma once

// Scalar type of the engine. The library is normally built in single
// precision; a double-precision instance (PATH_ENGINE_DOUBLE=1) exists for
// finite-difference gradient checks. Each instance lives in its own inline
// namespace so both can be linked into one program.

#ifndef PATH_ENGINE_DOUBLE
#define PATH_ENGINE_DOUBLE 0
#endif

#if PATH_ENGINE_DOUBLE
#define PATH_ENGINE_NS f64
#else
#define PATH_ENGINE_NS f32
#endif

namespace path_engine::inline PATH_ENGINE_NS {

#if PATH_ENGINE_DOUBLE
using real = double;
#else
using real = float;
#endif

}  // namespace path_engine
