#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfaug/hashing.hpp"

namespace cfaug {

// Deterministic, portable randomness. std::mt19937_64 has a
// standard-specified output sequence, but the std distributions do not,
// so all sampling on top of the raw engine is hand-rolled here.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, n) without modulo bias.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        for (;;) {
            std::uint64_t x = engine_();
            if (x < limit) return x % n;
        }
    }

    // Uniform double in [0, 1) with 53 random bits.
    double real01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double real(double lo, double hi) { return lo + (hi - lo) * real01(); }

    template <typename T>
    const T& pick(const std::vector<T>& items) {
        if (items.empty()) throw std::invalid_argument("Rng::pick: empty set");
        return items[static_cast<size_t>(below(items.size()))];
    }

    // Fisher-Yates, identical result on every platform.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

namespace detail {
inline void mix_part(std::uint64_t& h, std::string_view part) {
    h = fnv1a64(part, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
}
inline void append_key(std::string& key, const std::string& part) { key += part; }
inline void append_key(std::string& key, const char* part) { key += part; }
inline void append_key(std::string& key, std::uint64_t part) { key += std::to_string(part); }
inline void append_key(std::string& key, std::int64_t part) { key += std::to_string(part); }
inline void append_key(std::string& key, int part) { key += std::to_string(part); }
}  // namespace detail

// Derives an independent stream seed from a global seed plus a structured
// key (sample id, stage name, repeat index, ...). FNV-1a over the parts
// with a separator so ("ab","c") and ("a","bc") differ.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t global_seed, const Parts&... parts) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    std::string key = std::to_string(global_seed);
    detail::mix_part(h, key);
    (
        [&] {
            std::string s;
            detail::append_key(s, parts);
            detail::mix_part(h, s);
        }(),
        ...);
    return h;
}

template <typename... Parts>
Rng derive_rng(std::uint64_t global_seed, const Parts&... parts) {
    return Rng(derive_seed(global_seed, parts...));
}

}  // namespace cfaug
