// rng.hpp
// Counter-based randomness (Philox4x32-10). Each Monte Carlo trajectory owns
// a stream keyed by (seed, stream id), so the draw sequence depends only on
// those two integers and never on scheduling or worker count.

#pragma once

#include <array>
#include <cstdint>

namespace cavcon {

// Philox4x32-10 block function (Salmon et al., SC11 constants).
inline std::array<std::uint32_t, 4> philox4x32_10(
    std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t prod0 = std::uint64_t{kMul0} * counter[0];
    const std::uint64_t prod1 = std::uint64_t{kMul1} * counter[2];
    counter = {static_cast<std::uint32_t>(prod1 >> 32) ^ counter[1] ^ key[0],
               static_cast<std::uint32_t>(prod1),
               static_cast<std::uint32_t>(prod0 >> 32) ^ counter[3] ^ key[1],
               static_cast<std::uint32_t>(prod0)};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return counter;
}

// Stateless-per-block stream: block index in the low counter words, stream id
// in the high words, seed as the key. Yields two 64-bit values per block.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        stream_id_(stream_id) {}

  std::uint64_t next_u64() {
    if (word_ == 2) {
      const std::array<std::uint32_t, 4> counter = {
          static_cast<std::uint32_t>(block_),
          static_cast<std::uint32_t>(block_ >> 32),
          static_cast<std::uint32_t>(stream_id_),
          static_cast<std::uint32_t>(stream_id_ >> 32)};
      buffer_ = philox4x32_10(counter, key_);
      ++block_;
      word_ = 0;
    }
    const std::uint64_t lo = buffer_[2 * word_];
    const std::uint64_t hi = buffer_[2 * word_ + 1];
    ++word_;
    return lo | (hi << 32);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int word_ = 2;
};

}  // namespace cavcon
