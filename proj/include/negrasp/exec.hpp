#pragma once

namespace negrasp {

// Execution policy for the data-parallel kernels. Every parallel kernel has
// a serial twin that produces identical output (reductions run in index
// order); tests compare the two and the bench tool times them.
enum class Exec {
  kSerial,
  kParallel,
};

}  // namespace negrasp
