#pragma once

#include <cstdint>
#include <random>

namespace gflowot {

// Stream ids for deriving independent substreams from one master seed.
// A run is a pure function of (config, seed); every consumer of randomness
// gets its own stream so adding/removing one consumer cannot shift another.
enum class RngStream : std::uint64_t {
    WeightInit = 1,
    Sampling = 2,
    Dropout = 3,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t master, RngStream stream) {
    return splitmix64(master ^ (static_cast<std::uint64_t>(stream) * 0xd1342543de82ef95ULL));
}

// mt19937_64 with hand-rolled output mapping. The engine itself is
// standard-mandated bit-exact; the std distributions are not, so floating
// draws are built directly from engine output.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, 1) with 53 bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n) without modulo bias.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t r = engine_();
        while (r >= limit) r = engine_();
        return r % n;
    }

    bool bernoulli(double p) { return uniform01() < p; }

private:
    std::mt19937_64 engine_;
};

} // namespace gflowot
