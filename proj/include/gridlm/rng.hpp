#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace gridlm {

namespace detail {

// Stafford mix13 finalizer, the output mix of SplitMix64.
inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Counter-based splittable RNG. A draw is mix64(key + GAMMA * counter), so the
/// stream is a pure function of (key, counter) and the state is two u64 values.
/// split(stream) derives an independent key; child streams never collide with
/// the parent because the stream id passes through the same 64-bit mix.
class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(uint64_t seed) : key_(detail::mix64(seed ^ 0x9e3779b97f4a7c15ULL)), counter_(0) {}

    static Rng from_state(uint64_t key, uint64_t counter) {
        Rng r;
        r.key_ = key;
        r.counter_ = counter;
        return r;
    }

    uint64_t key() const { return key_; }
    uint64_t counter() const { return counter_; }

    /// Child generator for an independent stream; does not advance this one.
    Rng split(uint64_t stream) const {
        Rng r;
        r.key_ = detail::mix64(key_ ^ detail::mix64(stream + 0x632be59bd9b4e019ULL));
        r.counter_ = 0;
        return r;
    }

    uint64_t next_u64() {
        ++counter_;
        return detail::mix64(key_ + 0x9e3779b97f4a7c15ULL * counter_);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; two uniforms per call, no cached spare
    /// (keeps the state exactly (key, counter)).
    double gaussian() {
        const double u1 = 1.0 - uniform01(); // (0, 1], avoids log(0)
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    /// Uniform integer in [0, n) by rejection (unbiased).
    uint64_t below(uint64_t n) {
        if (n <= 1) return 0;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// k distinct values from [0, n), in random order.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> pool(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
        shuffle(pool);
        pool.resize(static_cast<size_t>(k));
        return pool;
    }

private:
    uint64_t key_;
    uint64_t counter_;
};

} // namespace gridlm
