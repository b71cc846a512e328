#pragma once

// Counter-based random streams. Trajectory i of a run with master seed s
// draws from stream(s, i): the Philox4x32-10 block cipher keyed by s, with
// the trajectory index in the upper half of the counter. Streams are
// independent of scheduling, so ensembles are reproducible for any thread
// count.

#include <array>
#include <cstdint>
#include <random>

namespace qfpt {

class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t seed, std::uint64_t stream_id)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_{static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    if (next_ == 2) refill();
    return out_[next_++];
  }

  void discard(unsigned long long z) {
    for (; z > 0; --z) (*this)();
  }

  /// Ten Philox rounds on one 128-bit counter block.
  static Block encrypt(Block ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  void refill() {
    const Block b = encrypt({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                             stream_[0], stream_[1]},
                            key_);
    ++block_;
    out_[0] = (std::uint64_t{b[1]} << 32) | b[0];
    out_[1] = (std::uint64_t{b[3]} << 32) | b[2];
    next_ = 0;
  }

  Key key_;
  std::array<std::uint32_t, 2> stream_;
  std::uint64_t block_ = 0;
  std::array<result_type, 2> out_{};
  int next_ = 2;
};

inline Philox4x32 stream(std::uint64_t seed, std::uint64_t index) { return {seed, index}; }

/// Standard normal draws from a per-trajectory stream.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t index) : engine_(seed, index) {}
  explicit NormalStream(Philox4x32 engine) : engine_(engine) {}

  double operator()() { return normal_(engine_); }
  double uniform() { return std::generate_canonical<double, 53>(engine_); }

 private:
  Philox4x32 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace qfpt
