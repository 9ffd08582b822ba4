#pragma once

// Expected calibration error with equal-mass binning, adversarial
// accuracy at a query budget, and average query cost.

#include <numeric>
#include <vector>

#include "aaalab/numkit.hpp"
#include "aaalab/trace.hpp"

namespace aaalab {

struct EceBin {
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

struct EceReport {
  int bins = 0;
  std::vector<EceBin> per_bin;
  double ece = 0.0;
};

// Samples are sorted by confidence and split into M contiguous
// near-equal-mass groups (remainder spread over the lowest bins);
// ECE = (1/N) * sum_m | sum_{i in B_m} correct_i - sum_{i in B_m} conf_i |.
inline EceReport ece(const std::vector<double>& confidences,
                     const std::vector<bool>& correct, int bins) {
  require(confidences.size() == correct.size(), "ece: length mismatch");
  require(bins >= 1, "ece: need at least one bin");
  const std::size_t n = confidences.size();
  require(n >= static_cast<std::size_t>(bins), "ece: fewer samples than bins");
  for (double c : confidences)
    require(c >= 0.0 && c <= 1.0, "ece: confidence outside [0, 1]");

  // Sort key (confidence, correct) so that ties are permutation-invariant.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (confidences[a] != confidences[b])
      return confidences[a] < confidences[b];
    return correct[a] < correct[b];
  });

  EceReport rep;
  rep.bins = bins;
  const std::size_t base = n / static_cast<std::size_t>(bins);
  const std::size_t extra = n % static_cast<std::size_t>(bins);
  std::size_t pos = 0;
  double total = 0.0;
  for (int m = 0; m < bins; ++m) {
    const std::size_t size =
        base + (static_cast<std::size_t>(m) < extra ? 1 : 0);
    double conf_sum = 0.0, hit_sum = 0.0;
    for (std::size_t i = 0; i < size; ++i, ++pos) {
      conf_sum += confidences[order[pos]];
      hit_sum += correct[order[pos]] ? 1.0 : 0.0;
    }
    EceBin bin;
    bin.count = size;
    bin.mean_confidence = size ? conf_sum / static_cast<double>(size) : 0.0;
    bin.accuracy = size ? hit_sum / static_cast<double>(size) : 0.0;
    rep.per_bin.push_back(bin);
    total += std::abs(hit_sum - conf_sum);
  }
  rep.ece = total / static_cast<double>(n);
  return rep;
}

// Correctness of the attacker's best candidate after at most `budget`
// queries; the best only changes on accepted rows.
inline bool correct_at_budget(const AttackTrace& t, int budget) {
  if (t.clean_misclassified) return false;
  bool correct = true;  // clean sample is correctly classified
  for (const TraceRow& r : t.rows) {
    if (r.query > budget) break;
    if (r.accepted) correct = r.correct;
  }
  return correct;
}

// Fraction of samples still correctly classified by the undefended
// oracle after the attacker spent at most `budget` queries.
inline double adversarial_accuracy(const std::vector<AttackTrace>& traces,
                                   int budget) {
  require(budget >= 0, "adversarial_accuracy: negative budget");
  if (traces.empty()) return 0.0;
  std::size_t hits = 0;
  for (const AttackTrace& t : traces)
    if (correct_at_budget(t, budget)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(traces.size());
}

// Mean queries consumed per sample: the first-success query index for
// successful attacks, the full budget otherwise. Samples misclassified
// before the attack consume zero queries.
inline double average_queries(const std::vector<AttackTrace>& traces) {
  require(!traces.empty(), "average_queries: no traces");
  double total = 0.0;
  for (const AttackTrace& t : traces) {
    if (t.clean_misclassified)
      continue;  // 0 queries
    else if (t.first_success_query >= 1)
      total += t.first_success_query;
    else
      total += t.budget;
  }
  return total / static_cast<double>(traces.size());
}

}  // namespace aaalab
