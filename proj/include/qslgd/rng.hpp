#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace qslgd {

/// Which population a stream belongs to. Auxiliary streams feed estimators
/// and kernel construction, never particle dynamics.
enum class StreamRole : std::uint32_t { kX = 0, kY = 1, kAux = 2 };

/// Philox4x32 block function, 10 rounds.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

/// Counter-based random stream addressed by (seed, role, index). Two streams
/// with distinct addresses never share a counter block, so per-particle
/// streams can be advanced from any thread in any order.
class NoiseStream {
 public:
  NoiseStream() = default;
  NoiseStream(std::uint64_t seed, StreamRole role, std::uint64_t index) noexcept;

  /// Uniform on the open interval (0, 1), 53 bits.
  double uniform() noexcept;
  /// Standard normal via Box-Muller on 32-bit uniforms; each counter block
  /// yields four variates, three of which are cached.
  double gaussian() noexcept;

  std::uint64_t blocks_consumed() const noexcept { return block_; }

 private:
  std::uint64_t next_u64() noexcept;
  void refill() noexcept;

  std::array<std::uint32_t, 2> key_{};
  std::uint64_t index_ = 0;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int cursor_ = 4;
  std::array<double, 4> spares_{};
  int spare_count_ = 0;
};

/// One stream per particle of a population.
class ParticleStreams {
 public:
  ParticleStreams() = default;
  ParticleStreams(std::uint64_t seed, StreamRole role, std::size_t count);

  std::size_t size() const noexcept { return streams_.size(); }
  NoiseStream& operator[](std::size_t i) { return streams_[i]; }
  const NoiseStream& operator[](std::size_t i) const { return streams_[i]; }

 private:
  std::vector<NoiseStream> streams_;
};

}  // namespace qslgd
