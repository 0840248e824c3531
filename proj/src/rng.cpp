#include "cift/rng.hpp"

#include "cift/types.hpp"

namespace cift {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x5851f42d4c957f2dULL)));
}

double Rng::normal() { return normal_(engine_); }

double Rng::uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

std::string to_string(Modality m) {
  return m == Modality::kVisible ? "VIS" : "IR";
}

Modality modality_from_string(const std::string& s) {
  if (s == "VIS") return Modality::kVisible;
  if (s == "IR") return Modality::kInfrared;
  throw FormatError("unknown modality '" + s + "' (expected VIS or IR)");
}

}  // namespace cift
