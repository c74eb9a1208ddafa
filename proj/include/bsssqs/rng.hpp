#pragma once

#include <cstdint>
#include <random>

#include "bsssqs/bytes.hpp"

namespace bsssqs {

// Seedable randomness source. Every random choice in the system flows
// through one of these so that runs are reproducible from a single seed.
// mt19937_64 output is fully specified by the standard, and the bounded
// draw uses rejection sampling, so sequences are stable across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform value in [0, bound) without modulo bias.
    std::uint64_t below(std::uint64_t bound)
    {
        if (bound == 0)
            throw Error("Rng::below: bound must be positive");
        const std::uint64_t threshold = (0 - bound) % bound; // 2^64 mod bound
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold)
                return r % bound;
        }
    }

    double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    Bytes bytes(std::size_t n)
    {
        Bytes out;
        out.reserve(n);
        while (out.size() < n) {
            std::uint64_t v = next_u64();
            for (int shift = 56; shift >= 0 && out.size() < n; shift -= 8)
                out.push_back(static_cast<std::uint8_t>(v >> shift));
        }
        return out;
    }

    // Seed for a derived stream (per node, per subsystem).
    std::uint64_t fork_seed() { return next_u64(); }

private:
    std::mt19937_64 engine_;
};

} // namespace bsssqs
