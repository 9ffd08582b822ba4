#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "aaalab/model.hpp"

using namespace aaalab;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("quantize8 endpoints and boundaries", "[model]") {
  CHECK(quantize8({0.0})[0] == 0.0);
  CHECK(quantize8({1.0})[0] == 1.0);
  CHECK(quantize8({1.0 / 510.0})[0] == 1.0 / 255.0);  // half rounds up
  CHECK(quantize8({0.5})[0] == 128.0 / 255.0);
  CHECK_THROWS_AS(quantize8({-0.01}), std::invalid_argument);
  CHECK_THROWS_AS(quantize8({1.01}), std::invalid_argument);
}

TEST_CASE("quantize8 is idempotent", "[model]") {
  RngStream rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Sample x = {rng.uniform(), rng.uniform(), rng.uniform()};
    const Sample q = quantize8(x);
    CHECK(quantize8(q) == q);
    for (double f : q) {
      const double grid = f * 255.0;
      CHECK(std::abs(grid - std::floor(grid + 0.5)) < 1e-9);
    }
  }
}

TEST_CASE("make_blobs determinism and geometry", "[model]") {
  const LabeledDataset a = make_blobs(50, 3, 4, 0.05, 99);
  const LabeledDataset b = make_blobs(50, 3, 4, 0.05, 99);
  CHECK(a.samples == b.samples);
  CHECK(a.labels == b.labels);
  CHECK(a.size() == 150);
  for (const Sample& s : a.samples)
    for (double f : s) {
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
    }
  for (int y : a.labels) CHECK(y < 3);
}

TEST_CASE("make_blobs degenerate spread collapses to the centers", "[model]") {
  const LabeledDataset d = make_blobs(20, 3, 5, 1e-12, 4);
  for (int c = 0; c < 3; ++c) {
    const Sample* first = nullptr;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.labels[i] != c) continue;
      if (!first) {
        first = &d.samples[i];
        continue;
      }
      for (std::size_t j = 0; j < first->size(); ++j)
        CHECK(std::abs(d.samples[i][j] - (*first)[j]) < 1e-9);
    }
  }
}

TEST_CASE("make_blobs rejects bad arguments", "[model]") {
  CHECK_THROWS_AS(make_blobs(0, 3, 4, 0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_blobs(10, 1, 4, 0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_blobs(10, 3, 1, 0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_blobs(10, 3, 4, 0.0, 1), std::invalid_argument);
}

TEST_CASE("forward on zero weights gives zero logits", "[model]") {
  MlpWeights w;
  MlpLayer l0;
  l0.w.assign(3, RealVec(2, 0.0));
  l0.b.assign(3, 0.0);
  MlpLayer l1;
  l1.w.assign(2, RealVec(3, 0.0));
  l1.b.assign(2, 0.0);
  w.layers = {l0, l1};
  const RealVec z = forward(w, {0.4, 0.9});
  CHECK(z == RealVec{0.0, 0.0});
}

TEST_CASE("single linear layer is a matrix-vector product", "[model]") {
  MlpWeights w;
  MlpLayer l;
  l.w = {{1.0, 2.0}, {-0.5, 0.25}};
  l.b = {0.5, -1.0};
  w.layers = {l};
  const RealVec z = forward(w, {0.2, 0.8});
  CHECK(z[0] == Catch::Approx(1.0 * 0.2 + 2.0 * 0.8 + 0.5).margin(1e-15));
  CHECK(z[1] == Catch::Approx(-0.5 * 0.2 + 0.25 * 0.8 - 1.0).margin(1e-15));
}

TEST_CASE("two-layer forward matches the hand-computed pass", "[model]") {
  MlpWeights w;
  MlpLayer l0;
  l0.w = {{1.0, -1.0}, {0.5, 0.25}};
  l0.b = {0.1, -0.2};
  MlpLayer l1;
  l1.w = {{2.0, 1.0}, {-1.0, 3.0}};
  l1.b = {0.0, 0.5};
  w.layers = {l0, l1};
  const RealVec z = forward(w, {0.3, 0.6});
  CHECK(z[0] == Catch::Approx(-0.295).margin(1e-3));
  CHECK(z[1] == Catch::Approx(0.996).margin(1e-3));
}

TEST_CASE("forward validates dimensions and is pure", "[model]") {
  MlpWeights w;
  MlpLayer l;
  l.w = {{1.0, 2.0}};
  l.b = {0.0};
  w.layers = {l};
  CHECK_THROWS_AS(forward(w, {1.0, 2.0, 3.0}), std::invalid_argument);
  CHECK(forward(w, {0.1, 0.2}) == forward(w, {0.1, 0.2}));
}

TEST_CASE("train_mlp learns linearly separable 2-D data", "[model]") {
  const LabeledDataset d = make_blobs(100, 2, 2, 0.04, 21);
  const TrainResult r = train_mlp(d, {8}, 30, 5);
  CHECK(r.train_accuracy >= 0.99);
}

TEST_CASE("train_mlp with zero epochs returns the initialization",
          "[model]") {
  const LabeledDataset d = make_blobs(20, 2, 3, 0.1, 2);
  const TrainResult a = train_mlp(d, {4}, 0, 7);
  const TrainResult b = train_mlp(d, {4}, 0, 7);
  CHECK(a.weights.layers.size() == 2);
  for (std::size_t l = 0; l < a.weights.layers.size(); ++l) {
    CHECK(a.weights.layers[l].w == b.weights.layers[l].w);
    CHECK(a.weights.layers[l].b == b.weights.layers[l].b);
  }
  // training for one epoch moves the weights
  const TrainResult c = train_mlp(d, {4}, 1, 7);
  CHECK(a.weights.layers[0].w != c.weights.layers[0].w);
}

TEST_CASE("train_mlp is deterministic in the seed", "[model]") {
  const LabeledDataset d = make_blobs(40, 3, 4, 0.08, 13);
  const TrainResult a = train_mlp(d, {8, 8}, 5, 17);
  const TrainResult b = train_mlp(d, {8, 8}, 5, 17);
  for (std::size_t l = 0; l < a.weights.layers.size(); ++l) {
    CHECK(a.weights.layers[l].w == b.weights.layers[l].w);
    CHECK(a.weights.layers[l].b == b.weights.layers[l].b);
  }
  CHECK(a.train_accuracy == b.train_accuracy);
}

TEST_CASE("train_mlp rejects empty data", "[model]") {
  LabeledDataset empty;
  empty.classes = 2;
  CHECK_THROWS_AS(train_mlp(empty, {4}, 1, 0), std::invalid_argument);
}

TEST_CASE("weights round-trip bitwise through the text format", "[model]") {
  const LabeledDataset d = make_blobs(30, 3, 4, 0.08, 31);
  const TrainResult r = train_mlp(d, {6}, 3, 1);
  const std::string path = tmp_path("aaalab_w_roundtrip.txt");
  save_weights(r.weights, path);
  const MlpWeights loaded = load_weights(path);

  RngStream rng(2);
  for (int i = 0; i < 20; ++i) {
    Sample x(4);
    for (double& f : x) f = rng.uniform();
    CHECK(forward(r.weights, x) == forward(loaded, x));
  }

  // accuracy recomputed from the persisted weights is identical
  std::size_t before = 0, after = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    before += argmax(forward(r.weights, d.samples[i])) ==
              static_cast<std::size_t>(d.labels[i]);
    after += argmax(forward(loaded, d.samples[i])) ==
             static_cast<std::size_t>(d.labels[i]);
  }
  CHECK(before == after);
  std::remove(path.c_str());
}

TEST_CASE("weights loader reports malformed files with line numbers",
          "[model]") {
  const std::string path = tmp_path("aaalab_w_bad.txt");

  {  // truncated file: EOF is reported at the first missing line
    std::ofstream out(path);
    out << "mlpweights v1 2 3 2\n1 2\n";
  }
  CHECK_THROWS_WITH(load_weights(path),
                    Catch::Matchers::ContainsSubstring(":3"));

  {  // wrong version
    std::ofstream out(path);
    out << "mlpweights v9 2 2\n";
  }
  CHECK_THROWS_WITH(load_weights(path),
                    Catch::Matchers::ContainsSubstring("version"));

  {  // not a weights file at all
    std::ofstream out(path);
    out << "something else\n";
  }
  CHECK_THROWS_AS(load_weights(path), std::runtime_error);

  {  // malformed number
    std::ofstream out(path);
    out << "mlpweights v1 2 1\nx y\n0\n";
  }
  CHECK_THROWS_WITH(load_weights(path),
                    Catch::Matchers::ContainsSubstring("malformed"));
  std::remove(path.c_str());
}
