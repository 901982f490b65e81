#include "qslgd/rng.hpp"

#include <cmath>
#include <numbers>

namespace qslgd {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) noexcept {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

NoiseStream::NoiseStream(std::uint64_t seed, StreamRole role, std::uint64_t index) noexcept
    : index_(index) {
  const std::uint64_t k = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(role) + 1));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

void NoiseStream::refill() noexcept {
  buffer_ = philox4x32_10({static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(index_ >> 32),
                           static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32)},
                          key_);
  ++block_;
  cursor_ = 0;
}

std::uint64_t NoiseStream::next_u64() noexcept {
  if (cursor_ > 2) refill();
  const std::uint64_t hi = buffer_[static_cast<std::size_t>(cursor_)];
  const std::uint64_t lo = buffer_[static_cast<std::size_t>(cursor_ + 1)];
  cursor_ += 2;
  return (hi << 32) | lo;
}

double NoiseStream::uniform() noexcept {
  // (k + 1/2) / 2^53 never hits 0 or 1.
  const std::uint64_t k = next_u64() >> 11;
  return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
}

double NoiseStream::gaussian() noexcept {
  if (spare_count_ > 0) return spares_[static_cast<std::size_t>(--spare_count_)];
  // One counter block feeds two Box-Muller pairs from 32-bit uniforms
  // (k + 1/2) / 2^32; the largest attainable |z| is about 6.7.
  std::array<double, 4> u{};
  for (int i = 0; i < 4; ++i) {
    if (cursor_ >= 4) refill();
    u[static_cast<std::size_t>(i)] = (static_cast<double>(buffer_[static_cast<std::size_t>(cursor_++)]) + 0.5) * 0x1.0p-32;
  }
  for (int pair = 0; pair < 2; ++pair) {
    const double radius = std::sqrt(-2.0 * std::log(u[2 * pair]));
    const double angle = 2.0 * std::numbers::pi * u[2 * pair + 1];
    spares_[static_cast<std::size_t>(2 * pair)] = radius * std::cos(angle);
    spares_[static_cast<std::size_t>(2 * pair + 1)] = radius * std::sin(angle);
  }
  spare_count_ = 3;
  return spares_[3];
}

ParticleStreams::ParticleStreams(std::uint64_t seed, StreamRole role, std::size_t count) {
  streams_.reserve(count);
  for (std::size_t i = 0; i < count; ++i) streams_.emplace_back(seed, role, i);
}

}  // namespace qslgd
