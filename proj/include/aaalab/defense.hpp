#pragma once

// AAA ("adversarial attack on attackers") logit post-processing defense.
//
// Score-based query attacks accept a perturbation whenever it strictly
// lowers the margin loss they observe. AAA exploits that greed: it
// optimizes the output logits so that, inside periodic intervals of the
// true margin, the reported margin moves in the opposite direction.
// Attackers descending the reported loss are steered away from the
// decision boundary. A second objective term keeps the reported
// confidence close to a temperature-calibrated target, so defense and
// calibration come out of the same module. Also here: the RND baseline
// (Gaussian input noise) and temperature tuning against ECE.

#include <vector>

#include "aaalab/metrics.hpp"
#include "aaalab/model.hpp"
#include "aaalab/numkit.hpp"

namespace aaalab {

struct AaaConfig {
  double attractor_interval = 6.0;  // t: period of the margin attractors
  double reverse_step = 1.0;        // alpha: slope of in-interval reversal
  double calibration_weight = 5.0;  // beta: weight of the confidence term
  double temperature = 1.0;         // T: calibration temperature
  int iterations = 100;             // fixed optimizer step count
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double target_floor = 1e-3;  // kappa: keeps targets off the boundary

  void validate() const {
    require(attractor_interval > 0.0, "AaaConfig: attractor_interval <= 0");
    require(reverse_step >= 0.0, "AaaConfig: reverse_step < 0");
    require(calibration_weight >= 0.0, "AaaConfig: calibration_weight < 0");
    require(temperature > 0.0, "AaaConfig: temperature <= 0");
    require(iterations >= 1, "AaaConfig: iterations < 1");
    require(lr > 0.0, "AaaConfig: lr <= 0");
    require(target_floor > 0.0, "AaaConfig: target_floor <= 0");
  }
};

// Margin loss: score of the label class minus the best other score.
// Negative exactly when the prediction differs from `label`.
inline double margin_loss(const RealVec& z, int label) {
  require(label >= 0 && static_cast<std::size_t>(label) < z.size(),
          "margin_loss: label out of range");
  require(z.size() >= 2, "margin_loss: need at least two classes");
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < z.size(); ++k)
    if (k != static_cast<std::size_t>(label))
      best_other = std::max(best_other, z[k]);
  return z[static_cast<std::size_t>(label)] - best_other;
}

// Margin against the model's own prediction: top-1 minus top-2, >= 0.
inline double unsupervised_margin_loss(const RealVec& z) {
  const Top2 t = top2(z);
  return t.v1 - t.v2;
}

// Closest attractor for an original margin l0 > 0; attractors sit at
// (k - 1/2) * t so none lands on the decision boundary. The interval
// ((k-1)t, kt] maps to (k - 1/2) t, half-open at the top.
inline double closest_attractor(double l0, double t) {
  require(t > 0.0, "closest_attractor: interval must be positive");
  require(l0 > 0.0, "closest_attractor: margin must be positive");
  return (std::ceil(l0 / t) - 0.5) * t;
}

// Reversed target margin: overshoot above the attractor becomes an equal
// undershoot scaled by alpha, floored at kappa so the target never
// touches the boundary. Margins at or below zero are treated as kappa.
inline double target_loss(double l0, double t, double alpha, double kappa) {
  require(kappa > 0.0, "target_loss: kappa must be positive");
  const double l0_eff = std::max(l0, kappa);
  const double la = closest_attractor(l0_eff, t);
  return std::max(la - alpha * (l0_eff - la), kappa);
}

struct TemperatureConfidence {
  double confidence = 0.0;  // max of the calibrated probabilities
  RealVec probs;
};

// softmax(z0 / T); division by a positive scalar never changes the argmax.
inline TemperatureConfidence temperature_confidence(const RealVec& z0,
                                                    double T) {
  require(T > 0.0, "temperature_confidence: temperature must be positive");
  RealVec scaled(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) scaled[i] = z0[i] / T;
  TemperatureConfidence out;
  out.probs = softmax(scaled);
  out.confidence = *std::max_element(out.probs.begin(), out.probs.end());
  return out;
}

// Joint objective: |current top-2 margin - l_t| + beta * |p_c - p_t|,
// where p_c is the softmax probability at the ORIGINAL top-1 index and
// the margin term re-derives top-2 from the current logits.
inline double aaa_objective(const RealVec& z, double l_t, double p_t,
                            double beta, int orig_top1) {
  require(orig_top1 >= 0 && static_cast<std::size_t>(orig_top1) < z.size(),
          "aaa_objective: class index out of range");
  const double margin = unsupervised_margin_loss(z);
  const RealVec p = softmax(z);
  return std::abs(margin - l_t) +
         beta * std::abs(p[static_cast<std::size_t>(orig_top1)] - p_t);
}

// Exact subgradient of aaa_objective. The margin term contributes +-1 on
// the current top-1/top-2 coordinates; the confidence term contributes
// beta * sign(p_c - p_t) times the softmax Jacobian row at c. At exact
// kinks (margin == l_t, p_c == p_t) the zero subgradient is chosen, and
// top-2 ties resolve to the lowest index, so a zero objective yields a
// zero gradient.
inline RealVec aaa_objective_grad(const RealVec& z, double l_t, double p_t,
                                  double beta, int orig_top1) {
  require(orig_top1 >= 0 && static_cast<std::size_t>(orig_top1) < z.size(),
          "aaa_objective_grad: class index out of range");
  RealVec g(z.size(), 0.0);
  const Top2 t = top2(z);
  const double s_margin = sgn(t.v1 - t.v2 - l_t);
  g[t.i1] += s_margin;
  g[t.i2] -= s_margin;
  if (beta != 0.0) {
    const RealVec p = softmax(z);
    const std::size_t c = static_cast<std::size_t>(orig_top1);
    const double s_conf = sgn(p[c] - p_t);
    if (s_conf != 0.0)
      for (std::size_t j = 0; j < z.size(); ++j)
        g[j] += beta * s_conf * p[c] * ((j == c ? 1.0 : 0.0) - p[j]);
  }
  return g;
}

// Post-processes one logits vector:
//   1. read the original margin l0 and derive its reversed target l_t,
//   2. read the temperature-calibrated confidence target p_t,
//   3. run a fixed number of Adam steps on the joint objective, keeping
//      the best prediction-preserving iterate visited,
//   4. if the prediction still changed, fall back to the original logits.
// Deterministic: identical inputs yield bitwise-identical outputs.
inline RealVec aaa_postprocess(const RealVec& z0, const AaaConfig& cfg) {
  cfg.validate();
  require(z0.size() >= 2, "aaa_postprocess: need at least two logits");
  require_finite(z0, "aaa_postprocess");

  const std::size_t orig_top1 = argmax(z0);
  const double l0 = unsupervised_margin_loss(z0);
  const double l_t = target_loss(l0, cfg.attractor_interval, cfg.reverse_step,
                                 cfg.target_floor);
  const double p_t = temperature_confidence(z0, cfg.temperature).confidence;
  const int c = static_cast<int>(orig_top1);

  RealVec z = z0;
  RealVec best = z0;
  double best_obj = aaa_objective(z0, l_t, p_t, cfg.calibration_weight, c);
  AdamState opt =
      AdamState::for_size(z.size(), cfg.lr, cfg.beta1, cfg.beta2);
  for (int it = 0; it < cfg.iterations; ++it) {
    const RealVec g =
        aaa_objective_grad(z, l_t, p_t, cfg.calibration_weight, c);
    adam_step(opt, z, g);
    const double obj = aaa_objective(z, l_t, p_t, cfg.calibration_weight, c);
    if (obj < best_obj && argmax(z) == orig_top1) {
      best_obj = obj;
      best = z;
    }
  }
  // Decision-preservation guard; unreachable given the filter above, but
  // the contract is load-bearing enough to re-check.
  if (argmax(best) != orig_top1) return z0;
  return best;
}

// All temperatures from 0.25 to 4.0 in multiplicative steps of 2^(1/4);
// contains 1.0 exactly.
inline std::vector<double> default_temperature_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 16; ++k)
    grid.push_back(0.25 * std::pow(2.0, static_cast<double>(k) / 4.0));
  return grid;
}

// Grid search for the temperature whose AAA-defended confidences have
// the lowest ECE on the validation logits; ties go to the smallest T.
inline double tune_temperature(const std::vector<RealVec>& val_logits,
                               const std::vector<int>& val_labels,
                               AaaConfig cfg, const std::vector<double>& grid,
                               int ece_bins = 15) {
  require(!grid.empty(), "tune_temperature: empty grid");
  require(val_logits.size() == val_labels.size(),
          "tune_temperature: logits/labels length mismatch");
  require(!val_logits.empty(), "tune_temperature: no validation samples");

  double best_t = grid.front();
  double best_ece = std::numeric_limits<double>::infinity();
  for (double T : grid) {
    require(T > 0.0, "tune_temperature: non-positive temperature in grid");
    cfg.temperature = T;
    std::vector<double> conf(val_logits.size());
    std::vector<bool> hit(val_logits.size());
    for (std::size_t i = 0; i < val_logits.size(); ++i) {
      const RealVec zd = aaa_postprocess(val_logits[i], cfg);
      const RealVec p = softmax(zd);
      const std::size_t pred = argmax(p);
      conf[i] = p[pred];
      hit[i] = pred == static_cast<std::size_t>(val_labels[i]);
    }
    const double e = ece(conf, hit, ece_bins).ece;
    if (e < best_ece || (e == best_ece && T < best_t)) {
      best_ece = e;
      best_t = T;
    }
  }
  return best_t;
}

// RND baseline: zero-mean Gaussian input noise of the given variance,
// clipped back into the unit box.
inline Sample rnd_defend(const Sample& x, double noise_variance,
                         RngStream& rng) {
  require(noise_variance >= 0.0, "rnd_defend: negative variance");
  require_unit_box(x, "rnd_defend");
  if (noise_variance == 0.0) return x;
  const double stddev = std::sqrt(noise_variance);
  Sample out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = std::clamp(x[i] + stddev * rng.normal(), 0.0, 1.0);
  return out;
}

enum class DefenseMode { none, aaa, rnd };

inline const char* to_string(DefenseMode m) {
  switch (m) {
    case DefenseMode::none: return "none";
    case DefenseMode::aaa: return "aaa";
    case DefenseMode::rnd: return "rnd";
  }
  return "?";
}

// A frozen base model plus exactly one active defense mode. Inputs are
// quantized to the 8-bit grid at the model boundary, mirroring how the
// deployed service would receive them.
struct DefendedModel {
  const MlpWeights* base = nullptr;  // non-owning
  DefenseMode mode = DefenseMode::none;
  AaaConfig aaa;
  double rnd_variance = 0.02;

  // Logits the client (user or attacker) sees. `rng` is consumed only in
  // rnd mode.
  RealVec query(const Sample& x, RngStream& rng) const {
    require(base != nullptr, "DefendedModel: no base weights");
    const Sample xq = quantize8(x);
    switch (mode) {
      case DefenseMode::none:
        return forward(*base, xq);
      case DefenseMode::aaa:
        return aaa_postprocess(forward(*base, xq), aaa);
      case DefenseMode::rnd:
        return forward(*base, rnd_defend(xq, rnd_variance, rng));
    }
    throw std::logic_error("DefendedModel: bad mode");
  }

  // Undefended logits of the same quantized input; scores the true
  // attack progress, never shown to the attacker.
  RealVec oracle_logits(const Sample& x) const {
    require(base != nullptr, "DefendedModel: no base weights");
    return forward(*base, quantize8(x));
  }
};

}  // namespace aaalab
