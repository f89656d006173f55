#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace congrad::rng {

// SplitMix64 step. Used as the mixing primitive of the seed-derivation tree:
// every random stream in the project is keyed by a master seed folded with a
// path of tags (round, language hash, prompt id, ...), so runs are fully
// reproducible and resumable without serializing generator state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive(std::uint64_t seed) {
    std::uint64_t s = seed;
    return splitmix64(s);
}

template <typename... Rest>
std::uint64_t derive(std::uint64_t seed, std::uint64_t head, Rest... rest) {
    std::uint64_t s = seed ^ (head + 0x9e3779b97f4a7c15ULL);
    return derive(splitmix64(s), rest...);
}

// FNV-1a, for turning language names and token sequences into path tags.
inline std::uint64_t hash_str(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t hash_tokens(const std::vector<int>& tokens) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int t : tokens) {
        h ^= static_cast<std::uint64_t>(t) + 0x9e37;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// mt19937_64 engine with hand-rolled distributions. The engine itself is
// pinned by the standard; std:: distributions are implementation-defined,
// which would make outputs compiler-dependent.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; the second draw is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = 1.0 - uniform01();  // (0, 1]
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n). Lemire multiply-shift; the bias is of order
    // n / 2^64 and irrelevant here.
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace congrad::rng
