#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace kdlab {

/// SplitMix64 finalizer. Used for seeding and for deriving sub-stream seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Mixes a parent seed with a stream identifier into a child seed.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream_id);

/// FNV-1a over a string, so string tags can name sub-streams.
std::uint64_t tag_hash(std::string_view tag);

/// xoshiro256** seeded through SplitMix64, with Box-Muller normals.
///
/// The stream depends only on the seed: the generator, the uniform mapping
/// (top 53 bits), the index sampler (rejection on the 64-bit output) and the
/// Box-Muller transform are all fixed here rather than delegated to the
/// implementation-defined std:: distributions.
class RngState {
public:
  explicit RngState(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  /// Uniform on [0, 1).
  double uniform();

  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via Box-Muller; the sine branch is cached for the next call.
  double normal();

  /// Independent generator for sub-stream `stream_id`. Depends on the seed
  /// this generator was built from, not on how far it has advanced.
  RngState fork(std::uint64_t stream_id) const;
  RngState fork(std::string_view tag) const { return fork(tag_hash(tag)); }

private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

} // namespace kdlab
