#pragma once

namespace aal {

// Selects the OpenMP kernel or its serial reference. Both produce the same
// values; the parallel kernels reduce in a fixed order so their results do
// not depend on the thread count.
enum class Exec { serial, parallel };

// Applies the AAL_THREADS environment cap, if set. Returns the thread count in effect.
int configure_threads_from_env();

}  // namespace aal
