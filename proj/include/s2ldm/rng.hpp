#pragma once

#include <cstdint>
#include <vector>

#include "s2ldm/tensor.hpp"

namespace s2ldm {

// Counter-based deterministic random stream. Every draw is a pure hash of
// (root_seed, stream_id, counter), so identical state reproduces identical
// output on every platform, and independent stream_ids can be handed to
// worker threads without coordination.
struct RngStream {
    uint64_t root_seed = 0;
    uint64_t stream_id = 0;
    uint64_t counter = 0;

    RngStream() = default;
    RngStream(uint64_t root, uint64_t stream) : root_seed(root), stream_id(stream) {}

    uint64_t next_u64();

    // Uniform in (0, 1]. The open lower bound keeps log() finite in Box-Muller.
    double next_uniform();

    // Standard normal via Box-Muller; consumes two counter values per draw.
    double next_gaussian();

    // Uniform integer in [0, n). n must be positive.
    int64_t next_below(int64_t n);
};

// Tensor of i.i.d. standard normal samples drawn from the stream.
Tensor gaussian(RngStream& stream, std::vector<int64_t> dims);

} // namespace s2ldm
