#pragma once

// Score-based query attacks sharing one greedy acceptance rule: a
// proposal replaces the current best query iff it strictly lowers the
// loss observed through the defended model. Square, SimBA and SignHunter
// are random-search methods; NES estimates a gradient from antithetic
// probes. Every model evaluation, probes included, is counted and
// recorded in the trace.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aaalab/defense.hpp"
#include "aaalab/model.hpp"
#include "aaalab/numkit.hpp"
#include "aaalab/trace.hpp"

namespace aaalab {

enum class AttackMethod { square, simba, signhunter, nes };

inline const char* to_string(AttackMethod m) {
  switch (m) {
    case AttackMethod::square: return "square";
    case AttackMethod::simba: return "simba";
    case AttackMethod::signhunter: return "signhunter";
    case AttackMethod::nes: return "nes";
  }
  return "?";
}

enum class LossKind { logit_margin, prob_margin, cross_entropy };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::logit_margin: return "logit-margin";
    case LossKind::prob_margin: return "prob-margin";
    case LossKind::cross_entropy: return "cross-entropy";
  }
  return "?";
}

struct AttackConfig {
  AttackMethod method = AttackMethod::square;
  Norm norm = Norm::linf;
  double epsilon = 0.15;
  int budget = 500;
  bool targeted = false;
  int target = -1;  // < 0: drawn per sample from the incorrect classes
  LossKind loss_kind = LossKind::logit_margin;
  std::uint64_t seed = 0;

  double square_p = 0.05;   // initial fraction of coordinates per window
  double simba_step = 0.2;  // per-coordinate step size
  double nes_probe = 0.01;  // delta: finite-difference probe scale
  double nes_step = 0.02;   // eta: signed step size
  int nes_population = 20;  // q: probe queries per gradient estimate

  void validate(std::size_t dim) const {
    require(epsilon > 0.0, "AttackConfig: epsilon must be positive");
    require(budget >= 1, "AttackConfig: budget must be at least 1");
    // The 8-bit grid must intersect the ball, or no feasible query exists.
    if (norm == Norm::linf)
      require(epsilon >= 1.0 / 255.0, "AttackConfig: linf epsilon below 1/255");
    else
      require(epsilon >= std::sqrt(static_cast<double>(dim)) / 255.0,
              "AttackConfig: l2 epsilon below sqrt(dim)/255");
    require(square_p > 0.0 && square_p <= 1.0, "AttackConfig: bad square_p");
    require(simba_step > 0.0, "AttackConfig: bad simba_step");
    require(nes_probe > 0.0, "AttackConfig: bad nes_probe");
    require(nes_step > 0.0, "AttackConfig: bad nes_step");
    require(nes_population >= 2, "AttackConfig: nes_population below 2");
  }
};

inline double logsumexp(const RealVec& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

// Attack-side loss, uniformly "lower is more adversarial":
//   logit-margin    z_y - max_{k!=y} z_k           (negative iff pred != y)
//   prob-margin     the same margin on softmax(z)
//   cross-entropy   log p_y, the negated cross-entropy of the label
// Targeted mode scores progress toward class c: the margin kinds return
// max_{k!=c} - (class c), negative iff predicted as c; cross-entropy
// returns -log p_c.
inline double attack_loss(const RealVec& z, int label, LossKind kind,
                          bool targeted = false, int target = -1) {
  require(label >= 0 && static_cast<std::size_t>(label) < z.size(),
          "attack_loss: label out of range");
  if (!targeted) {
    switch (kind) {
      case LossKind::logit_margin:
        return margin_loss(z, label);
      case LossKind::prob_margin:
        return margin_loss(softmax(z), label);
      case LossKind::cross_entropy:
        return z[static_cast<std::size_t>(label)] - logsumexp(z);
    }
  } else {
    require(target >= 0 && static_cast<std::size_t>(target) < z.size(),
            "attack_loss: target out of range");
    require(target != label, "attack_loss: target equals the true label");
    switch (kind) {
      case LossKind::logit_margin:
        return -margin_loss(z, target);
      case LossKind::prob_margin:
        return -margin_loss(softmax(z), target);
      case LossKind::cross_entropy:
        return -(z[static_cast<std::size_t>(target)] - logsumexp(z));
    }
  }
  throw std::logic_error("attack_loss: bad kind");
}

// Spec projection: clamp the perturbation into the norm ball, then clip
// the candidate into the unit box (which never grows a coordinate's
// distance from the in-box clean sample, so both constraints hold).
inline RealVec project(const Sample& clean, RealVec delta, Norm norm,
                       double eps) {
  require(eps > 0.0, "project: epsilon must be positive");
  require(clean.size() == delta.size(), "project: dimension mismatch");
  if (norm == Norm::linf) {
    for (double& d : delta) d = std::clamp(d, -eps, eps);
  } else {
    const double n = l2_norm(delta);
    if (n > eps)
      for (double& d : delta) d *= eps / n;
  }
  for (std::size_t j = 0; j < delta.size(); ++j) {
    const double cand = clean[j] + delta[j];
    if (cand < 0.0)
      delta[j] = -clean[j];
    else if (cand > 1.0)
      delta[j] = 1.0 - clean[j];
  }
  return delta;
}

// Projects a raw proposal onto the feasible query set: epsilon-ball
// around `clean`, unit box, and the 8-bit grid, all simultaneously. For
// linf the grid point nearest the ball-clamped value is snapped into the
// per-coordinate feasible interval; for l2 the perturbation is shrunk by
// the worst-case quantization displacement before rounding.
inline Sample snap_feasible(const Sample& clean, const Sample& proposal,
                            Norm norm, double eps) {
  require(clean.size() == proposal.size(), "snap_feasible: dim mismatch");
  const std::size_t dim = clean.size();
  Sample out(dim);
  if (norm == Norm::linf) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double lo = std::max(0.0, clean[j] - eps);
      const double hi = std::min(1.0, clean[j] + eps);
      const double v = std::clamp(proposal[j], lo, hi);
      double k = std::floor(v * 255.0 + 0.5);
      // 1e-6 grid-unit slack keeps FP dust from excluding boundary points
      k = std::clamp(k, std::ceil(lo * 255.0 - 1e-6),
                     std::floor(hi * 255.0 + 1e-6));
      k = std::clamp(k, 0.0, 255.0);
      out[j] = k / 255.0;
    }
  } else {
    RealVec delta(dim);
    for (std::size_t j = 0; j < dim; ++j)
      delta[j] = std::clamp(proposal[j], 0.0, 1.0) - clean[j];
    const double margin = std::sqrt(static_cast<double>(dim)) / 510.0;
    const double radius = std::max(eps - margin, 0.0);
    const double n = l2_norm(delta);
    if (n > radius)
      for (double& d : delta) d *= (n == 0.0 ? 0.0 : radius / n);
    for (std::size_t j = 0; j < dim; ++j)
      out[j] = std::clamp(clean[j] + delta[j], 0.0, 1.0);
    out = quantize8(out);
  }
  return out;
}

struct AttackState {
  Sample clean;
  Sample best;
  double best_loss = std::numeric_limits<double>::infinity();
  int queries = 0;
  RngStream rng;
};

// Window fraction schedule of the Square attack: the initial fraction
// halves at fixed points of the (budget-normalized) query count.
inline double square_p_schedule(double p_init, int query_index, int budget) {
  const long long it =
      static_cast<long long>(query_index) * 10000 / std::max(budget, 1);
  if (it <= 10) return p_init;
  if (it <= 50) return p_init / 2;
  if (it <= 200) return p_init / 4;
  if (it <= 1000) return p_init / 8;
  if (it <= 2000) return p_init / 16;
  if (it <= 4000) return p_init / 32;
  if (it <= 6000) return p_init / 64;
  if (it <= 8000) return p_init / 128;
  return p_init / 256;
}

// 2*pairs Gaussian directions with u[2i+1] = -u[2i].
inline std::vector<RealVec> nes_antithetic_probes(std::size_t dim, int pairs,
                                                  RngStream& rng) {
  std::vector<RealVec> probes;
  probes.reserve(static_cast<std::size_t>(2 * pairs));
  for (int i = 0; i < pairs; ++i) {
    RealVec u(dim);
    for (double& v : u) v = rng.normal();
    RealVec neg(dim);
    for (std::size_t j = 0; j < dim; ++j) neg[j] = -u[j];
    probes.push_back(std::move(u));
    probes.push_back(std::move(neg));
  }
  return probes;
}

// Score-weighted NES gradient estimate around x; `loss` is evaluated at
// x + delta * u for every antithetic direction u.
template <class LossFn>
RealVec nes_estimate_gradient(const RealVec& x, double delta, int population,
                              RngStream& rng, LossFn&& loss) {
  const int pairs = population / 2;
  require(pairs >= 1, "nes_estimate_gradient: population below 2");
  const auto probes = nes_antithetic_probes(x.size(), pairs, rng);
  RealVec g(x.size(), 0.0);
  for (const RealVec& u : probes) {
    RealVec point(x.size());
    for (std::size_t j = 0; j < x.size(); ++j)
      point[j] = x[j] + delta * u[j];
    const double l = loss(point);
    for (std::size_t j = 0; j < x.size(); ++j) g[j] += l * u[j];
  }
  const double scale = 1.0 / (static_cast<double>(2 * pairs) * delta);
  for (double& v : g) v *= scale;
  return g;
}

namespace detail {

// Shared query bookkeeping: snaps the proposal into the feasible set,
// queries the defended model, applies the strict-decrease acceptance
// rule, and records one trace row per call.
struct GreedyContext {
  const DefendedModel& model;
  const AttackConfig& cfg;
  int label;
  int target;  // resolved target class (targeted mode only)
  AttackState st;
  AttackTrace trace;
  RngStream defense_rng;

  GreedyContext(const DefendedModel& m, const AttackConfig& c, Sample clean,
                int y, int tgt, RngStream proposal_rng, RngStream def_rng)
      : model(m), cfg(c), label(y), target(tgt), defense_rng(def_rng) {
    st.clean = std::move(clean);
    st.best = st.clean;
    st.rng = proposal_rng;
    trace.budget = cfg.budget;
  }

  bool exhausted() const { return st.queries >= cfg.budget; }
  int remaining() const { return cfg.budget - st.queries; }

  struct Outcome {
    double defended_loss = 0.0;
    bool accepted = false;
  };

  // `baseline` marks the method's opening query, which becomes the best
  // unconditionally. Probe queries pass accept_eligible = false.
  Outcome query(const Sample& proposal, bool accept_eligible,
                bool baseline = false) {
    const Sample cand =
        snap_feasible(st.clean, proposal, cfg.norm, cfg.epsilon);
    const RealVec zd = model.query(cand, defense_rng);
    const double defended =
        attack_loss(zd, label, cfg.loss_kind, cfg.targeted, target);
    const RealVec zu = model.oracle_logits(cand);
    const double oracle_margin =
        cfg.targeted ? -margin_loss(zu, target) : margin_loss(zu, label);
    const std::size_t pred = argmax(zu);
    const bool correct = pred == static_cast<std::size_t>(label);
    const bool goal_hit = cfg.targeted
                              ? pred == static_cast<std::size_t>(target)
                              : pred != static_cast<std::size_t>(label);

    ++st.queries;
    const bool accepted =
        baseline || (accept_eligible && defended < st.best_loss);
    if (accepted) {
      st.best = cand;
      st.best_loss = defended;
      if (goal_hit && trace.first_success_query < 0)
        trace.first_success_query = st.queries;
    }
    trace.rows.push_back(
        {st.queries, defended, oracle_margin, accepted, correct});
    trace.candidates.push_back(cand);
    return {defended, accepted};
  }
};

inline void run_square(GreedyContext& ctx, double vertex) {
  const std::size_t dim = ctx.st.clean.size();
  Sample init(dim);  // stripe init: independent +-epsilon per coordinate
  for (std::size_t j = 0; j < dim; ++j)
    init[j] = ctx.st.clean[j] +
              (ctx.st.rng.next_u64() & 1 ? vertex : -vertex);
  ctx.query(init, true, /*baseline=*/true);

  while (!ctx.exhausted()) {
    const double p =
        square_p_schedule(ctx.cfg.square_p, ctx.st.queries, ctx.cfg.budget);
    const std::size_t len = std::clamp<std::size_t>(
        static_cast<std::size_t>(
            std::ceil(p * static_cast<double>(dim))),
        1, dim);
    const std::size_t pos = ctx.st.rng.below(dim - len + 1);
    const double sign = ctx.st.rng.next_u64() & 1 ? vertex : -vertex;
    Sample prop = ctx.st.best;
    for (std::size_t j = pos; j < pos + len; ++j)
      prop[j] = ctx.st.clean[j] + sign;
    ctx.query(prop, true);
  }
}

inline void run_simba(GreedyContext& ctx) {
  const std::size_t dim = ctx.st.clean.size();
  ctx.query(ctx.st.clean, true, /*baseline=*/true);

  std::vector<std::size_t> order(dim);
  std::size_t pos = dim;  // forces a reshuffle on first use
  for (std::size_t j = 0; j < dim; ++j) order[j] = j;

  while (!ctx.exhausted()) {
    if (pos == dim) {
      ctx.st.rng.shuffle(order);
      pos = 0;
    }
    const std::size_t c = order[pos++];
    Sample prop = ctx.st.best;
    prop[c] += ctx.cfg.simba_step;
    const auto out = ctx.query(prop, true);
    if (!out.accepted && !ctx.exhausted()) {
      Sample neg = ctx.st.best;
      neg[c] -= ctx.cfg.simba_step;
      ctx.query(neg, true);
    }
  }
}

inline void run_signhunter(GreedyContext& ctx, double vertex) {
  const std::size_t dim = ctx.st.clean.size();
  std::vector<int> signs(dim, 1);

  auto candidate = [&](const std::vector<int>& s) {
    Sample prop(dim);
    for (std::size_t j = 0; j < dim; ++j)
      prop[j] = ctx.st.clean[j] + vertex * s[j];
    return prop;
  };

  ctx.query(candidate(signs), true, /*baseline=*/true);

  std::size_t level = 0;  // chunk size = ceil(dim / 2^level)
  std::size_t chunk = 0;
  while (!ctx.exhausted()) {
    const std::size_t size = std::max<std::size_t>(
        1, (dim + (std::size_t{1} << level) - 1) >> level);
    const std::size_t lo = chunk * size;
    const std::size_t hi = std::min(dim, lo + size);
    std::vector<int> flipped = signs;
    for (std::size_t j = lo; j < hi; ++j) flipped[j] = -flipped[j];
    const auto out = ctx.query(candidate(flipped), true);
    if (out.accepted) signs = std::move(flipped);

    ++chunk;
    const std::size_t chunks = (dim + size - 1) / size;
    if (chunk >= chunks) {
      chunk = 0;
      if (size == 1)
        level = 0;  // restart the halving sweep from the whole vector
      else
        ++level;
    }
  }
}

inline void run_nes(GreedyContext& ctx) {
  ctx.query(ctx.st.clean, true, /*baseline=*/true);
  const int pairs = ctx.cfg.nes_population / 2;
  const int batch = 2 * pairs;

  // A full round costs `batch` probe queries plus one step query.
  while (ctx.remaining() >= batch + 1) {
    const RealVec g = nes_estimate_gradient(
        ctx.st.best, ctx.cfg.nes_probe, ctx.cfg.nes_population, ctx.st.rng,
        [&](const RealVec& point) {
          return ctx.query(point, /*accept_eligible=*/false).defended_loss;
        });
    Sample prop = ctx.st.best;
    for (std::size_t j = 0; j < prop.size(); ++j)
      prop[j] -= ctx.cfg.nes_step * sgn(g[j]);
    ctx.query(prop, true);
  }
}

}  // namespace detail

// Runs the configured attack against the defended model. Origin samples
// the model already misclassifies are recorded as zero-query traces. The
// attack always runs to its budget; success is recorded per query so
// accuracy-versus-queries curves can be cut at any checkpoint.
inline AttackTrace greedy_loop(const DefendedModel& model, const Sample& x,
                               int label, const AttackConfig& cfg) {
  cfg.validate(x.size());
  require_unit_box(x, "greedy_loop");
  const RealVec clean_logits = model.oracle_logits(x);
  require(label >= 0 && static_cast<std::size_t>(label) < clean_logits.size(),
          "greedy_loop: label out of range");

  RngStream root(cfg.seed);
  if (argmax(clean_logits) != static_cast<std::size_t>(label)) {
    AttackTrace t;
    t.budget = cfg.budget;
    t.clean_misclassified = true;
    t.first_success_query = 0;
    return t;
  }

  int target = -1;
  if (cfg.targeted) {
    if (cfg.target >= 0) {
      require(cfg.target != label, "greedy_loop: target equals true label");
      target = cfg.target;
    } else {
      const std::size_t k = clean_logits.size();
      target = static_cast<int>(root.split(2).below(k - 1));
      if (target >= label) ++target;  // skip the true label
    }
  }

  detail::GreedyContext ctx(model, cfg, x, label, target, root.split(0),
                            root.split(1));
  const double vertex =
      cfg.norm == Norm::linf
          ? cfg.epsilon
          : cfg.epsilon / std::sqrt(static_cast<double>(x.size()));

  switch (cfg.method) {
    case AttackMethod::square: detail::run_square(ctx, vertex); break;
    case AttackMethod::simba: detail::run_simba(ctx); break;
    case AttackMethod::signhunter: detail::run_signhunter(ctx, vertex); break;
    case AttackMethod::nes: detail::run_nes(ctx); break;
  }
  return std::move(ctx.trace);
}

}  // namespace aaalab
