#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace ladder {

/// Seedable xoshiro256** generator with named sub-streams.
///
/// Every distribution is implemented here rather than through <random> so
/// that draws are bit-identical across standard libraries.
class Rng {
   public:
    explicit Rng(std::uint64_t seed = 0);

    /// Independent stream derived from this generator's seed and a name.
    /// Splitting does not advance the parent.
    Rng split(std::string_view name) const;
    Rng split(std::uint64_t index) const;

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    float uniform(float lo, float hi);
    /// Standard normal via Box-Muller.
    double normal();
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    std::uint64_t seed() const noexcept { return seed_; }

   private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view text);

}  // namespace ladder
