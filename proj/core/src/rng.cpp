#include "conure/rng.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "conure/errors.hpp"

namespace conure {

double Rng::normal(double mean, double stddev) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + spare_ * stddev;
  }
  const double two_pi = 6.283185307179586476925286766559;
  const double angle = uniform01() * two_pi;
  // 1 - u keeps the log argument strictly positive
  const double radius = std::sqrt(-2.0 * std::log(1.0 - uniform01()));
  spare_ = std::sin(angle) * radius;
  has_spare_ = true;
  return mean + std::cos(angle) * radius * stddev;
}

std::int64_t Rng::below(std::int64_t n) {
  if (n <= 0) throw ContractError("Rng::below: n must be positive, got " + std::to_string(n));
  const auto un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::int64_t>(x % un);
}

Rng Rng::fork(std::uint64_t salt) const {
  // splitmix64 over (a peek-free hash of) the serialized engine state plus salt
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : serialize()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = h + salt + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return Rng(z ^ (z >> 31));
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", spare_);
  out << buf;
  return out.str();
}

void Rng::restore(const std::string& text) {
  std::istringstream in(text);
  int spare_flag = 0;
  std::string spare_hex;
  in >> engine_ >> spare_flag >> spare_hex;
  if (in.fail()) throw ContractError("Rng::restore: malformed state string");
  has_spare_ = spare_flag != 0;
  spare_ = std::strtod(spare_hex.c_str(), nullptr);
}

bool Rng::operator==(const Rng& other) const {
  return engine_ == other.engine_ && has_spare_ == other.has_spare_ && spare_ == other.spare_;
}

}  // namespace conure
