#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace txlr {

/// 64-bit FNV-1a; used for seed derivation and content fingerprints.
constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Named, seedable generator. Every stochastic operation takes one of these
/// explicitly; there is no global RNG anywhere in the library.
class Rng {
public:
    Rng() : Rng("default", 0) {}
    Rng(std::string name, std::uint64_t seed) : name_(std::move(name)), engine_(mix(seed, name_)) {}

    const std::string& name() const noexcept { return name_; }
    std::mt19937_64& engine() noexcept { return engine_; }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    std::size_t uniform_index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    /// Normal resampled until it falls within two standard deviations.
    double truncated_normal(double stddev) {
        for (;;) {
            double x = normal(0.0, 1.0);
            if (x >= -2.0 && x <= 2.0) return x * stddev;
        }
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Derive an independent generator; stable under unrelated changes elsewhere.
    Rng fork(std::string_view child) const {
        return Rng(name_ + "/" + std::string(child), fnv1a64(child, seed_material()));
    }

    std::string serialize() const {
        std::ostringstream os;
        os << name_ << '\n' << engine_;
        return os.str();
    }

    static Rng deserialize(const std::string& s) {
        std::istringstream is(s);
        Rng r;
        std::getline(is, r.name_);
        is >> r.engine_;
        return r;
    }

    friend bool operator==(const Rng& a, const Rng& b) { return a.name_ == b.name_ && a.engine_ == b.engine_; }

private:
    static std::uint64_t mix(std::uint64_t seed, const std::string& name) {
        return fnv1a64(name, seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
    }

    std::uint64_t seed_material() const {
        std::mt19937_64 copy = engine_;
        return copy();
    }

    std::string name_;
    std::mt19937_64 engine_;
};

}  // namespace txlr
