#pragma once

// Splittable counter-based random streams. A stream is identified by
// (seed, path of labels); drawing never depends on how sibling streams are
// used, so Monte Carlo loops can be parallelized by splitting and the result
// is independent of thread count.

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace icl {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// Wichura's AS241 (PPND16) inverse of the standard normal CDF.
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("inverse_normal_cdf: p outside (0,1)");
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double x;
  if (r <= 5.0) {
    r -= 1.6;
    x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
  }
  return (q < 0.0) ? -x : x;
}

}  // namespace detail

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed)
      : seed_(seed), key_(detail::mix64(seed ^ detail::kGolden)), counter_(0) {}

  // Child stream for an independent substream; the parent is not touched.
  RngStream split(std::string_view label) const {
    RngStream child(*this);
    child.path_.emplace_back(label);
    child.key_ = detail::mix64(key_ ^ detail::fnv1a64(label));
    child.counter_ = 0;
    return child;
  }

  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  // Uniform on the open interval (0,1); never returns an endpoint so the
  // inverse-CDF Gaussian below is always finite.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double next_gauss() { return detail::inverse_normal_cdf(next_uniform()); }

  // +1 or -1 with equal probability.
  double next_sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  const std::vector<std::string>& path() const { return path_; }

 private:
  std::uint64_t seed_;
  std::vector<std::string> path_;
  std::uint64_t key_;
  std::uint64_t counter_;
};

inline RngStream make_rng(std::uint64_t seed) { return RngStream(seed); }

}  // namespace icl
