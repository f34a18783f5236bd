#pragma once

#include <cstdint>

namespace eamri {
namespace opcount {

// Thread-local multiply-accumulate counter for dense tensor contractions
// (conv2d and matmul). Elementwise products and FFT butterflies are not
// counted: the counter exists to audit how contraction cost scales with
// spatial size, and those terms are shared physics plumbing.
inline thread_local uint64_t macs = 0;

inline void add(uint64_t n) { macs += n; }
inline void reset() { macs = 0; }
inline uint64_t get() { return macs; }

// Invocation counter for the edge-prediction path, used to audit that
// edge-free model variants never touch edge code.
inline thread_local uint64_t edge_net_calls = 0;

}  // namespace opcount
}  // namespace eamri
