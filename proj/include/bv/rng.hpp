#ifndef BV_RNG_HPP
#define BV_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

namespace bv {

// Deterministic RNG with explicitly fixed sampling algorithms. The std::
// distributions are implementation-defined, which would tie frozen test
// values and byte-level pipeline reproducibility to the standard library
// version, so the few samplers we need are spelled out here.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    // splitmix64
    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) {
        // rejection sampling to avoid modulo bias
        uint64_t threshold = (0ull - n) % n;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    int uniform_int(int lo, int hi) {  // inclusive range
        return lo + int(below(uint64_t(hi - lo + 1)));
    }

    // Box-Muller, one value per call (the paired value is discarded to keep
    // call sites order-independent).
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
        return mean + stddev * z;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // derive an independent stream (e.g. per worker or per stage)
    Rng fork(uint64_t salt) {
        Rng r(state_ ^ (salt * 0xd6e8feb86659fd93ull + 0x2545f4914f6cdd1dull));
        r.next();
        return r;
    }

  private:
    uint64_t state_;
};

// FNV-1a over bytes, used for content-addressed stage skipping.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace bv

#endif
