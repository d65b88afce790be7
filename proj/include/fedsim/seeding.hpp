#pragma once

#include <cstdint>
#include <initializer_list>

namespace fedsim {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a tuple of
/// coordinates (fold, round, client, purpose tag, ...). The result depends
/// only on the values, never on call order, so per-client streams are stable
/// under any scheduling of the training tasks.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = mix64(base);
  for (std::uint64_t p : parts) {
    h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  }
  return h;
}

/// Purpose tags keep streams for different consumers apart.
enum class StreamTag : std::uint64_t {
  kData = 1,
  kKFold = 2,
  kPartition = 3,
  kInit = 4,
  kSelect = 5,
  kClient = 6,
  kCentral = 7,
};

inline std::uint64_t tag(StreamTag t) noexcept { return static_cast<std::uint64_t>(t); }

}  // namespace fedsim
