#ifndef SGE_RNG_HPP_
#define SGE_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace sge {

/// Named, independent random substreams derived from a single base seed.
/// Every source of randomness in the project (weight init, data generation,
/// shuffling) pulls from one of these, so that runs are comparable across
/// configurations that share the base seed.
class SeedStreams {
 public:
  explicit SeedStreams(std::uint64_t base_seed) : base_(base_seed) {}

  std::uint64_t base_seed() const { return base_; }

  /// A fresh engine for the given substream name. Same (base, name) pair
  /// always yields the same sequence.
  std::mt19937_64 stream(std::string_view name) const {
    const std::uint64_t h = fnv1a(name);
    std::seed_seq seq{static_cast<std::uint32_t>(base_),
                      static_cast<std::uint32_t>(base_ >> 32),
                      static_cast<std::uint32_t>(h),
                      static_cast<std::uint32_t>(h >> 32)};
    return std::mt19937_64(seq);
  }

 private:
  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    return h;
  }

  std::uint64_t base_;
};

}  // namespace sge

#endif  // SGE_RNG_HPP_
