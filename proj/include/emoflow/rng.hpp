#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace emoflow {

// xoshiro256++ with splitmix64 seeding. Hand-rolled so that draws are
// bit-identical across platforms and standard library versions; all
// randomness in the project flows through named streams derived from a
// single u64 seed.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    std::uint64_t next_u64();

    // uniform in [0,1) with 53 bits of mantissa
    double uniform01();

    // uniform in [lo, hi)
    double uniform(double lo, double hi);

    // standard normal via Box-Muller (cached spare)
    double normal();

    double normal(double mean, double stddev);

    // unbiased integer in [0, n) by rejection
    std::uint64_t below(std::uint64_t n);

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::uint64_t state_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view s);

// Derives an independent stream from (seed, name). Stream names used in the
// project: "corpus", "init", "batching", "eval", "split".
RngStream named_stream(std::uint64_t seed, std::string_view name);

} // namespace emoflow
