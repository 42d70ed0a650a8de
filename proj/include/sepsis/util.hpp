#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace sepsis {

constexpr int64_t kMinutesPerHour = 60;
constexpr int64_t kBlockMinutes = 5;
constexpr int64_t kMaxWindowMinutes = 5 * 24 * 60;  // five-day observation cap

// Derives independent substreams from a master seed (SplitMix64 finalizer).
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x5851f42d4c957f2dULL));
}

// mt19937_64 engine with hand-rolled transforms. The engine output is
// standardized, the std:: distributions are not, so rolling the transforms
// keeps output bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (hi <= lo) return lo;
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  double normal(double mean, double sd) {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sd * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  size_t weighted_choice(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double x = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (x < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
};

// FNV-1a 64-bit; content fingerprint for manifests and reproducibility
// checks, not a cryptographic hash.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t fnv1a64_str(const std::string& s);
uint64_t fnv1a64_file(const std::string& path);
std::string hex64(uint64_t v);

// Shortest round-trip formatting, locale independent.
std::string format_double(double v);

std::string timestamp_utc();

// Runs fn(i) for i in [0, n). workers <= 1 runs inline. Chunk boundaries
// depend only on n and a fixed grain, so results that are written by index
// are identical for any worker count.
void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn);

}  // namespace sepsis
