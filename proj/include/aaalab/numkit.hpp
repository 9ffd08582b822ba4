#pragma once

// Minimal deterministic numerical substrate: stable softmax, top-2
// extraction, a bias-corrected Adam optimizer, and counter-based
// splittable random streams. Everything here is a pure function of its
// explicit arguments; nothing touches global state.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace aaalab {

using RealVec = std::vector<double>;

// Thrown when a computed quantity violates a structural invariant that
// valid inputs can never produce (distinct from std::invalid_argument,
// which flags bad inputs). Maps to CLI exit code 2.
class invariant_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_finite(const RealVec& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x))
      throw std::invalid_argument(std::string(what) + ": non-finite element");
}

// sign with sign(0) = 0; the subgradient convention used throughout.
inline double sgn(double u) { return (u > 0.0) - (u < 0.0); }

// Numerically stable softmax (max-shift). Output sums to 1.
inline RealVec softmax(const RealVec& v) {
  require(!v.empty(), "softmax: empty input");
  require_finite(v, "softmax");
  const double shift = *std::max_element(v.begin(), v.end());
  RealVec out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - shift);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

struct Top2 {
  std::size_t i1 = 0;  // index of the largest element
  double v1 = 0.0;
  std::size_t i2 = 0;  // index of the runner-up
  double v2 = 0.0;
};

// Largest and runner-up elements; ties broken by lowest index.
inline Top2 top2(const RealVec& v) {
  require(v.size() >= 2, "top2: need at least two elements");
  Top2 r;
  r.v1 = -std::numeric_limits<double>::infinity();
  r.v2 = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > r.v1) {
      r.i2 = r.i1;
      r.v2 = r.v1;
      r.i1 = i;
      r.v1 = v[i];
    } else if (v[i] > r.v2) {
      r.i2 = i;
      r.v2 = v[i];
    }
  }
  return r;
}

inline std::size_t argmax(const RealVec& v) {
  require(!v.empty(), "argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;  // ties keep the lowest index
  return best;
}

// Adam with bias correction. Moments live in the state; params are
// updated in place so the same state can drive long trajectories.
struct AdamState {
  RealVec m;  // first moment
  RealVec v;  // second moment
  std::int64_t step = 0;
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_size(std::size_t n, double lr = 0.1,
                            double beta1 = 0.9, double beta2 = 0.999) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    return s;
  }
};

inline void adam_step(AdamState& st, RealVec& params, const RealVec& grad) {
  require(params.size() == grad.size() && params.size() == st.m.size() &&
              params.size() == st.v.size(),
          "adam_step: length mismatch");
  st.step += 1;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

// Counter-based random stream (splitmix64 core). The output sequence is
// a pure function of (seed, counter), so identical seeds reproduce the
// sequence on any platform, and split() derives statistically
// independent child streams without sharing state.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64() {
    ++counter_;
    return mix(seed_ + counter_ * kGamma);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller on explicit uniforms; avoids
  // std::normal_distribution, whose sequence is not portable.
  double normal() {
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  // Uniform integer in [0, n) by 128-bit multiply-shift.
  std::size_t below(std::size_t n) {
    require(n > 0, "RngStream::below: n must be positive");
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Child stream keyed by `key`; independent of this stream's counter.
  RngStream split(std::uint64_t key) const {
    return RngStream(mix(seed_ ^ mix(key * kGamma + 0x1D8E4E27C47D124FULL)));
  }

  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i)
      std::swap(xs[i - 1], xs[below(i)]);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

// Seed-derivation helper used by the harness so that any (channel, index)
// slice of an experiment is reproducible in isolation.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t channel) {
  return RngStream(master).split(channel).seed();
}

}  // namespace aaalab
