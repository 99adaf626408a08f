#include "qbnn/rng.hpp"

#include <cmath>

namespace qbnn {

namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer
uint64_t mix64(uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace

RngStream::RngStream(uint64_t seed, uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), key_(mix64(mix64(seed) ^ mix64(stream_id ^ 0xA5A5A5A5A5A5A5A5ull))) {}

uint64_t RngStream::next_u64() {
    return mix64(key_ + counter_++ * kGolden);
}

double RngStream::next_uniform() {
    // 53-bit mantissa, shifted into the open interval (0, 1)
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

RngStream RngStream::substream(uint64_t id) const {
    RngStream child(0, 0);
    child.seed_ = key_;
    child.stream_id_ = id;
    child.key_ = mix64(key_ ^ mix64(id + 0x5851F42D4C957F2Dull));
    child.counter_ = 0;
    return child;
}

Tensor gaussian_sample(RngStream& rng, const std::vector<int>& dims) {
    Tensor t(dims);
    for (int i = 0; i < t.size(); ++i) t[i] = rng.next_gaussian();
    return t;
}

void shuffle_indices(std::vector<int>& indices, RngStream& rng) {
    for (size_t i = indices.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.next_u64() % i);
        std::swap(indices[i - 1], indices[j]);
    }
}

} // namespace qbnn
