#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "aaalab/harness.hpp"

using namespace aaalab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small, fast experiment: tiny dataset, short training, short attacks.
ExperimentConfig tiny_config(const std::string& out) {
  ExperimentConfig cfg;
  cfg.classes = 3;
  cfg.dim = 8;
  cfg.per_class = 60;
  cfg.spread = 0.08;
  cfg.hidden = {12};
  cfg.epochs = 25;
  cfg.epsilon = 0.2;
  cfg.budget = 60;
  cfg.attack_samples = 12;
  cfg.checkpoints = {20, 60};
  cfg.ece_bins = 5;
  cfg.aaa.iterations = 40;
  cfg.temperature_grid = {0.5, 1.0, 2.0};
  cfg.out_dir = out;
  cfg.master_seed = 7;
  return cfg;
}

std::string tmp_dir(const char* name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

}  // namespace

TEST_CASE("config files parse with overrides and comments", "[harness]") {
  const std::string dir = tmp_dir("aaalab_cfg");
  const std::string path = dir + "/exp.cfg";
  {
    std::ofstream out(path);
    out << "# an experiment\n"
        << "data.classes = 4\n"
        << "data.dim=10   # inline comment\n"
        << "attack.methods = square, nes\n"
        << "aaa.t = 5.5\n"
        << "defense.modes = none,aaa\n"
        << "eval.checkpoints = 10,50\n";
  }
  ExperimentConfig cfg = ExperimentConfig::from_file(path);
  CHECK(cfg.classes == 4);
  CHECK(cfg.dim == 10);
  REQUIRE(cfg.methods.size() == 2);
  CHECK(cfg.methods[1] == AttackMethod::nes);
  CHECK(cfg.aaa.attractor_interval == 5.5);
  CHECK(cfg.defenses.size() == 2);

  cfg.set("aaa.alpha", "0.5");
  CHECK(cfg.aaa.reverse_step == 0.5);
  CHECK_THROWS_AS(cfg.set("bogus.key", "1"), std::invalid_argument);
  CHECK_THROWS_AS(cfg.set("data.dim", "abc"), std::invalid_argument);
  CHECK_THROWS_AS(cfg.set("eval.checkpoints", "50,10"),
                  std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::from_file(dir + "/absent.cfg"),
                  std::invalid_argument);
}

TEST_CASE("data splits are disjoint and deterministic", "[harness]") {
  const ExperimentConfig cfg = tiny_config(tmp_dir("aaalab_split"));
  const DataSplit a = prepare_data(cfg);
  const DataSplit b = prepare_data(cfg);
  CHECK(a.train.samples == b.train.samples);
  CHECK(a.val.samples == b.val.samples);
  CHECK(a.test.samples == b.test.samples);

  const std::size_t total = a.train.size() + a.val.size() + a.test.size();
  CHECK(total == static_cast<std::size_t>(cfg.per_class * cfg.classes));
  CHECK(a.test.size() > 0);
  CHECK(a.val.size() > 0);

  // no sample appears in two splits
  auto contains = [](const LabeledDataset& d, const Sample& s) {
    for (const Sample& x : d.samples)
      if (x == s) return true;
    return false;
  };
  for (const Sample& s : a.val.samples) CHECK(!contains(a.train, s));
  for (const Sample& s : a.test.samples) {
    CHECK(!contains(a.train, s));
    CHECK(!contains(a.val, s));
  }
}

TEST_CASE("train command round-trips and reproduces bytes", "[harness]") {
  ExperimentConfig cfg = tiny_config(tmp_dir("aaalab_train"));
  const TrainOutput out = cmd_train(cfg);
  CHECK(out.train_accuracy >= 0.95);
  CHECK(out.test_accuracy >= 0.95);  // spread 0.08 blobs separate cleanly

  const MlpWeights loaded = load_weights(out.weights_path);
  const DataSplit split = prepare_data(cfg);
  const DefendedModel plain = make_defended(loaded, cfg, DefenseMode::none);
  CHECK(defended_accuracy(plain, split.test, RngStream(0)) ==
        out.test_accuracy);

  const std::string bytes = slurp(out.weights_path);
  cmd_train(cfg);
  CHECK(slurp(out.weights_path) == bytes);
}

TEST_CASE("calibrate command tunes no worse than identity", "[harness]") {
  ExperimentConfig cfg = tiny_config(tmp_dir("aaalab_cal"));
  cmd_train(cfg);
  const CalibrateOutput a = cmd_calibrate(cfg);
  CHECK(a.ece_after <= a.ece_before);
  const CalibrateOutput b = cmd_calibrate(cfg);
  CHECK(a.temperature == b.temperature);
  CHECK(a.ece_after == b.ece_after);
}

TEST_CASE("attack command emits recomputable reports", "[harness]") {
  ExperimentConfig cfg = tiny_config(tmp_dir("aaalab_attack"));
  cfg.defenses = {DefenseMode::none, DefenseMode::aaa};
  cfg.methods = {AttackMethod::square};
  cmd_train(cfg);
  const std::vector<CellResult> cells = cmd_attack(cfg);
  REQUIRE(cells.size() == 2);
  const CellResult& none_cell = cells[0];
  const CellResult& aaa_cell = cells[1];

  // decision preservation: identical clean accuracy for none and aaa
  CHECK(none_cell.clean_accuracy == aaa_cell.clean_accuracy);

  // recomputation oracle: metrics rebuilt from the emitted CSVs
  std::vector<AttackTrace> reread;
  for (std::size_t i = 0; i < none_cell.traces.size(); ++i) {
    const std::string path = cfg.out_dir + "/traces/none-square/sample_" +
                             [&] {
                               char buf[16];
                               std::snprintf(buf, sizeof(buf), "%05zu", i);
                               return std::string(buf);
                             }() +
                             ".csv";
    AttackTrace t = read_trace_csv(path, cfg.budget);
    // untargeted success: the first accepted row that is incorrect
    bool correct = !t.clean_misclassified;
    for (const TraceRow& r : t.rows) {
      if (r.accepted && correct && !r.correct &&
          t.first_success_query < 0)
        t.first_success_query = r.query;
      if (r.accepted) correct = r.correct;
    }
    if (t.clean_misclassified) t.first_success_query = 0;
    reread.push_back(std::move(t));
  }
  for (int cp : cfg.checkpoints)
    CHECK(adversarial_accuracy(reread, std::min(cp, cfg.budget)) ==
          none_cell.adv_accuracy.at(cp));
  CHECK(average_queries(reread) == none_cell.avg_queries);

  // byte-identical rerun of every report and trace file
  const std::string report = slurp(cfg.out_dir + "/report-none-square.json");
  const std::string summary = slurp(cfg.out_dir + "/summary.json");
  const std::string one_trace =
      slurp(cfg.out_dir + "/traces/aaa-square/sample_00003.csv");
  cmd_attack(cfg);
  CHECK(slurp(cfg.out_dir + "/report-none-square.json") == report);
  CHECK(slurp(cfg.out_dir + "/summary.json") == summary);
  CHECK(slurp(cfg.out_dir + "/traces/aaa-square/sample_00003.csv") ==
        one_trace);
}

TEST_CASE("sweep with a single point reproduces the attack cell",
          "[harness]") {
  ExperimentConfig cfg = tiny_config(tmp_dir("aaalab_sweep"));
  cfg.defenses = {DefenseMode::aaa};
  cfg.methods = {AttackMethod::simba};
  cmd_train(cfg);

  cfg.sweep_param = "t";
  cfg.sweep_grid = {cfg.aaa.attractor_interval};
  const std::vector<SweepRow> rows = cmd_sweep(cfg);
  REQUIRE(rows.size() == 1);

  const std::vector<CellResult> cells = cmd_attack(cfg);
  REQUIRE(cells.size() == 1);
  CHECK(rows[0].clean_accuracy == cells[0].clean_accuracy);
  CHECK(rows[0].ece_value == cells[0].ece_value);
  CHECK(rows[0].adv_accuracy ==
        adversarial_accuracy(cells[0].traces, cfg.budget));

  cfg.sweep_grid = {2.0, 4.0, 6.0};
  CHECK(cmd_sweep(cfg).size() == 3);  // one row per grid point
}

TEST_CASE("trace command matches the grid's per-sample file", "[harness]") {
  ExperimentConfig cfg = tiny_config(tmp_dir("aaalab_trace"));
  cfg.defenses = {DefenseMode::aaa};
  cfg.methods = {AttackMethod::square};
  cfg.attack_samples = 6;
  cmd_train(cfg);
  cmd_attack(cfg);
  cfg.trace_sample = 4;
  const std::string path = cmd_trace(cfg);
  CHECK(slurp(path) ==
        slurp(cfg.out_dir + "/traces/aaa-square/sample_00004.csv"));
}

TEST_CASE("attack without a trained model is a usage error", "[harness]") {
  ExperimentConfig cfg = tiny_config(tmp_dir("aaalab_nomodel"));
  CHECK_THROWS_AS(cmd_attack(cfg), std::runtime_error);
}
