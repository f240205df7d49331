#include "s2ldm/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace s2ldm {

static inline uint64_t splitmix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t RngStream::next_u64() {
    uint64_t h = splitmix64(root_seed);
    h = splitmix64(h ^ splitmix64(stream_id));
    h = splitmix64(h ^ splitmix64(counter++));
    return h;
}

double RngStream::next_uniform() {
    // 53 mantissa bits, shifted into (0, 1].
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
    double u1 = next_uniform();
    double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int64_t RngStream::next_below(int64_t n) {
    if (n <= 0) throw std::invalid_argument("RngStream::next_below: n must be positive");
    return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
}

Tensor gaussian(RngStream& stream, std::vector<int64_t> dims) {
    Tensor t(std::move(dims));
    double* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = stream.next_gaussian();
    return t;
}

} // namespace s2ldm
