#pragma once

#include <cstdint>
#include <random>

namespace cpsgd {

// Purpose tags keep the random streams of a run disjoint.
enum class Stream : std::uint32_t {
  Dataset = 1,
  Init = 2,
  Noise = 3,
  Compression = 4,
  Contract = 5,
  Calibration = 6,
};

// Engine for the (seed, purpose, agent, round) coordinate. Every agent owns its
// stream per round, so draws never depend on evaluation order or thread count.
inline std::mt19937_64 make_engine(std::uint64_t seed, Stream purpose, std::uint64_t agent = 0,
                                   std::uint64_t round = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose),
                    static_cast<std::uint32_t>(agent), static_cast<std::uint32_t>(agent >> 32),
                    static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(round >> 32)};
  return std::mt19937_64(seq);
}

// FNV-1a, used to derive stable sub-seeds and dataset fingerprints.
class Fnv1a {
 public:
  void add_bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void add(const T& value) {
    add_bytes(&value, sizeof(T));
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace cpsgd
