#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string_view>

namespace polsbe {

/// Deterministic keyed random stream (splitmix64 core).
///
/// Every consumer of randomness owns a stream derived by name from the run
/// seed, so results do not depend on thread scheduling or evaluation order.
/// Substreams are derived by folding integer ids (or hashed names) into the
/// parent key; streams with distinct derivation paths are independent for
/// all practical purposes.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key)
      : origin_(mix(key ^ kDomain)), state_(origin_) {}

  /// Child stream for a named purpose, e.g. substream({kRollout, k, h}).
  /// Derivation uses the creation key only, never the number of draws taken.
  [[nodiscard]] RngStream substream(std::uint64_t id) const {
    return from_key(mix(origin_ ^ mix(id + kGolden)));
  }
  [[nodiscard]] RngStream substream(std::initializer_list<std::uint64_t> ids) const {
    std::uint64_t key = origin_;
    for (auto id : ids) key = mix(key ^ mix(id + kGolden));
    return from_key(key);
  }

  std::uint64_t next_u64() {
    state_ += kGolden;
    return mix(state_);
  }

  /// Uniform double in [0, 1), 53 bits of mantissa.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Exponential(1) via inverse CDF.
  double next_exponential() { return -std::log1p(-next_double()); }

  /// Standard normal via Box-Muller (fresh pair each call, second value dropped).
  double next_gaussian() {
    double u1 = next_double(), u2 = next_double();
    // avoid log(0)
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  /// Uniform integer in {0, ..., n-1}.
  int next_index(int n) {
    if (n <= 0) throw std::invalid_argument("next_index: n must be positive");
    return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                             static_cast<unsigned __int128>(n)) >> 64);
  }

  /// Categorical draw by inverse CDF in index order.
  int sample(std::span<const double> probs) {
    const double u = next_double();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;  // guard against rounding shortfall
  }

 private:
  static RngStream from_key(std::uint64_t raw) {
    RngStream s(0);
    s.origin_ = raw;
    s.state_ = raw;
    return s;
  }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t kDomain = 0x706f6c736265ULL;
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  std::uint64_t origin_;
  std::uint64_t state_;
};

/// FNV-1a hash for stable stream names.
constexpr std::uint64_t stream_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace polsbe
