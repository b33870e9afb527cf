#pragma once

#include <cstdint>
#include <initializer_list>

namespace mmcl {

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter), so workers that agree on stream ids reproduce the
// same numbers regardless of scheduling.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept;

  static std::uint64_t draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept;

  std::uint64_t next_u64() noexcept;
  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  // Standard normal via Box-Muller; consumes two draws.
  double normal() noexcept;
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }
  void set_counter(std::uint64_t c) noexcept { counter_ = c; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Order-sensitive hash of a tuple of integers, used to derive stream ids.
std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts) noexcept;

}  // namespace mmcl
