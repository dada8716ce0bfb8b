#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace qgen {

// FNV-1a with fixed constants. std::hash is not stable across standard
// libraries, so anything persisted or replayed must go through this.
constexpr uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

constexpr uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr uint64_t mix64(uint64_t a, uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

// mt19937_64 plus portable bounded draws. uniform_int_distribution is not
// specified bit-for-bit across implementations, so it is avoided here.
class SeededRng {
  public:
    explicit SeededRng(uint64_t seed) : engine_(seed) {}

    uint64_t next() { return engine_(); }

    // [0, n); returns 0 for n == 0
    size_t next_below(size_t n) {
        if (n == 0) return 0;
        return static_cast<size_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    // [0, 1)
    double next_unit() { return (next() >> 11) * 0x1.0p-53; }

  private:
    std::mt19937_64 engine_;
};

}  // namespace qgen
