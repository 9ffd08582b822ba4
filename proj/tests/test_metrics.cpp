#include <catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "aaalab/metrics.hpp"

using namespace aaalab;

namespace {

// Brute-force reference: sort (confidence, correct) pairs, split into
// near-equal groups, accumulate the displayed formula directly.
double ece_reference(std::vector<double> conf, std::vector<bool> correct,
                     int bins) {
  const std::size_t n = conf.size();
  std::vector<std::pair<double, bool>> pairs(n);
  for (std::size_t i = 0; i < n; ++i) pairs[i] = {conf[i], correct[i]};
  std::sort(pairs.begin(), pairs.end());
  double total = 0.0;
  std::size_t pos = 0;
  for (int m = 0; m < bins; ++m) {
    std::size_t size = n / bins + (static_cast<std::size_t>(m) < n % bins);
    double cs = 0.0, hs = 0.0;
    for (std::size_t i = 0; i < size; ++i, ++pos) {
      cs += pairs[pos].first;
      hs += pairs[pos].second ? 1.0 : 0.0;
    }
    total += std::abs(hs - cs);
  }
  return total / static_cast<double>(n);
}

AttackTrace scripted_trace(int budget, bool clean_miss,
                           const std::vector<std::tuple<int, bool, bool>>&
                               rows /* query, accepted, correct */) {
  AttackTrace t;
  t.budget = budget;
  t.clean_misclassified = clean_miss;
  if (clean_miss) {
    t.first_success_query = 0;
    return t;
  }
  double loss = 100.0;
  for (const auto& [q, acc, cor] : rows) {
    if (acc) loss -= 1.0;
    t.rows.push_back({q, loss, cor ? 1.0 : -1.0, acc, cor});
    if (acc && !cor && t.first_success_query < 0) t.first_success_query = q;
  }
  return t;
}

}  // namespace

TEST_CASE("ece hand values", "[metrics]") {
  // perfect calibration
  const EceReport perfect =
      ece(std::vector<double>(10, 1.0), std::vector<bool>(10, true), 5);
  CHECK(perfect.ece == 0.0);

  // one bin, accuracy 0.5, mean confidence 0.8 -> 0.3
  std::vector<double> conf(10, 0.8);
  std::vector<bool> hit(10, false);
  for (int i = 0; i < 5; ++i) hit[static_cast<std::size_t>(i)] = true;
  const EceReport r = ece(conf, hit, 1);
  CHECK(r.ece == Catch::Approx(0.3).margin(1e-12));
  CHECK(r.per_bin.size() == 1);
  CHECK(r.per_bin[0].count == 10);
  CHECK(r.per_bin[0].accuracy == 0.5);
  CHECK(r.per_bin[0].mean_confidence == Catch::Approx(0.8).margin(1e-12));
}

TEST_CASE("ece validates inputs", "[metrics]") {
  CHECK_THROWS_AS(ece({0.5}, {true, false}, 1), std::invalid_argument);
  CHECK_THROWS_AS(ece({0.5, 0.6}, {true, false}, 3), std::invalid_argument);
  CHECK_THROWS_AS(ece({1.5}, {true}, 1), std::invalid_argument);
  CHECK_THROWS_AS(ece({0.5}, {true}, 0), std::invalid_argument);
}

TEST_CASE("ece matches the brute-force reference", "[metrics]") {
  RngStream rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 5 + rng.below(200);
    std::vector<double> conf(n);
    std::vector<bool> hit(n);
    for (std::size_t i = 0; i < n; ++i) {
      conf[i] = rng.uniform();
      hit[i] = rng.uniform() < conf[i];
    }
    const int bins = 1 + static_cast<int>(rng.below(std::min<std::size_t>(n, 20)));
    const EceReport r = ece(conf, hit, bins);
    CHECK(r.ece == Catch::Approx(ece_reference(conf, hit, bins)).margin(1e-12));
    CHECK(r.ece >= 0.0);
    CHECK(r.ece <= 1.0);
    std::size_t total = 0;
    for (const EceBin& b : r.per_bin) total += b.count;
    CHECK(total == n);
  }
}

TEST_CASE("ece with one bin per sample is the mean absolute gap",
          "[metrics]") {
  RngStream rng(17);
  const std::size_t n = 64;
  std::vector<double> conf(n);
  std::vector<bool> hit(n);
  double expect = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    conf[i] = rng.uniform();
    hit[i] = rng.uniform() < 0.5;
    expect += std::abs((hit[i] ? 1.0 : 0.0) - conf[i]);
  }
  expect /= static_cast<double>(n);
  CHECK(ece(conf, hit, static_cast<int>(n)).ece ==
        Catch::Approx(expect).margin(1e-12));
}

TEST_CASE("ece is permutation invariant", "[metrics]") {
  RngStream rng(19);
  std::vector<double> conf;
  std::vector<bool> hit;
  for (int i = 0; i < 100; ++i) {
    conf.push_back(static_cast<double>(rng.below(5)) / 4.0);  // heavy ties
    hit.push_back(rng.uniform() < 0.5);
  }
  const double base = ece(conf, hit, 7).ece;
  std::vector<std::size_t> order(conf.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int trial = 0; trial < 20; ++trial) {
    rng.shuffle(order);
    std::vector<double> c2(conf.size());
    std::vector<bool> h2(conf.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      c2[i] = conf[order[i]];
      h2[i] = hit[order[i]];
    }
    CHECK(ece(c2, h2, 7).ece == base);
  }
}

TEST_CASE("adversarial accuracy over scripted traces", "[metrics]") {
  // sample A: flips at query 3; sample B: never flips; sample C: clean miss
  std::vector<AttackTrace> traces;
  traces.push_back(scripted_trace(
      5, false,
      {{1, true, true}, {2, false, true}, {3, true, false}, {4, false, true},
       {5, true, false}}));
  traces.push_back(scripted_trace(
      5, false, {{1, true, true}, {2, true, true}, {3, false, false}}));
  traces.push_back(scripted_trace(5, true, {}));

  CHECK(adversarial_accuracy(traces, 0) ==
        Catch::Approx(2.0 / 3.0).margin(1e-12));  // clean accuracy
  CHECK(adversarial_accuracy(traces, 2) == Catch::Approx(2.0 / 3.0));
  CHECK(adversarial_accuracy(traces, 3) == Catch::Approx(1.0 / 3.0));
  CHECK(adversarial_accuracy(traces, 5) == Catch::Approx(1.0 / 3.0));

  // monotone non-increasing in the budget
  double prev = 1.0;
  for (int b = 0; b <= 5; ++b) {
    const double acc = adversarial_accuracy(traces, b);
    CHECK(acc <= prev);
    prev = acc;
  }
}

TEST_CASE("average queries", "[metrics]") {
  std::vector<AttackTrace> all_fail;
  for (int i = 0; i < 4; ++i)
    all_fail.push_back(
        scripted_trace(250, false, {{1, true, true}, {2, false, true}}));
  CHECK(average_queries(all_fail) == 250.0);

  std::vector<AttackTrace> half;
  half.push_back(scripted_trace(100, false, {{1, true, false}}));
  half.push_back(scripted_trace(100, false, {{1, true, true}}));
  CHECK(average_queries(half) == Catch::Approx((1.0 + 100.0) / 2.0));

  CHECK_THROWS_AS(average_queries({}), std::invalid_argument);

  // clean-misclassified samples consume zero queries
  std::vector<AttackTrace> with_miss;
  with_miss.push_back(scripted_trace(100, true, {}));
  with_miss.push_back(scripted_trace(100, false, {{1, true, true}}));
  CHECK(average_queries(with_miss) == 50.0);
}
