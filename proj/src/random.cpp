#include "layerprobe/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace layerprobe {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_string(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

double box_muller(double u1, double u2, bool cosine) noexcept {
  // u1 in (0, 1] so the log is finite.
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return radius * (cosine ? std::cos(angle) : std::sin(angle));
}

}  // namespace

double keyed_normal(std::uint64_t seed, std::uint64_t key, std::uint64_t stream) noexcept {
  const std::uint64_t base = mix64(mix64(seed ^ mix64(key)) ^ mix64(stream + 0x632be59bd9b4e019ULL));
  const double u1 = 1.0 - to_unit(mix64(base));
  const double u2 = to_unit(mix64(base + 1));
  return box_muller(u1, u2, true);
}

std::uint64_t Rng::uniform_below(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

double Rng::uniform01() { return to_unit(engine_()); }

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  cached_normal_ = box_muller(u1, u2, false);
  has_cached_normal_ = true;
  return box_muller(u1, u2, true);
}

}  // namespace layerprobe
