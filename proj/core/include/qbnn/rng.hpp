#pragma once

#include <cstdint>
#include <vector>

#include "qbnn/tensor.hpp"

namespace qbnn {

/// Counter-based random stream. The value at position n is a pure function
/// of (seed, stream_id, n), so identical (seed, stream_id) pairs replay the
/// identical sequence and distinct stream ids give unrelated sequences.
/// substream() derives an independent child stream, which lets Monte-Carlo
/// fan-out index its randomness by (sample, layer) instead of by call order.
class RngStream {
  public:
    RngStream(uint64_t seed, uint64_t stream_id);

    uint64_t next_u64();
    double next_uniform();   // open interval (0, 1)
    double next_gaussian();  // standard normal, consumes two uniforms

    RngStream substream(uint64_t id) const;

    uint64_t seed() const { return seed_; }
    uint64_t stream_id() const { return stream_id_; }

  private:
    uint64_t seed_;
    uint64_t stream_id_;
    uint64_t key_;
    uint64_t counter_ = 0;
};

/// i.i.d. standard normal tensor, reproducible per (seed, stream_id).
Tensor gaussian_sample(RngStream& rng, const std::vector<int>& dims);

/// Deterministic Fisher-Yates shuffle driven by the stream.
void shuffle_indices(std::vector<int>& indices, RngStream& rng);

} // namespace qbnn
