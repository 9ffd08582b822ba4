#pragma once

// Experiment orchestration: flat key=value configs with command-line
// overrides, deterministic dataset splits and seed fanout, and the
// train / calibrate / attack / sweep / trace commands. Reports carry
// nothing that cannot be recomputed from the emitted traces plus the
// config.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aaalab/attacks.hpp"
#include "aaalab/defense.hpp"
#include "aaalab/metrics.hpp"
#include "aaalab/model.hpp"
#include "aaalab/numkit.hpp"
#include "aaalab/trace.hpp"

namespace aaalab {

// Seed channels: every random decision in an experiment hangs off
// RngStream(master).split(channel)[.split(index)...], so any slice can
// be regenerated in isolation.
namespace seed_channel {
constexpr std::uint64_t dataset = 1;
constexpr std::uint64_t split_shuffle = 2;
constexpr std::uint64_t training = 3;
constexpr std::uint64_t attack = 4;       // .split(defense).split(method).split(sample)
constexpr std::uint64_t defended_eval = 5;  // .split(defense): ECE / clean-acc passes
}  // namespace seed_channel

struct ExperimentConfig {
  // data.*
  int classes = 3;
  int dim = 16;
  int per_class = 1750;
  double spread = 0.08;
  double train_fraction = 0.6;
  double val_fraction = 0.2;

  // model.*
  std::vector<int> hidden = {32, 32};
  int epochs = 40;
  double train_lr = 0.01;
  int batch = 32;
  std::string model_path;  // empty: "<out_dir>/model.txt"

  // defense.* / aaa.* / rnd.*
  std::vector<DefenseMode> defenses = {DefenseMode::none, DefenseMode::aaa,
                                       DefenseMode::rnd};
  AaaConfig aaa;
  double rnd_variance = 0.02;

  // attack.* and method knobs
  std::vector<AttackMethod> methods = {AttackMethod::square};
  Norm norm = Norm::linf;
  double epsilon = 0.15;
  int budget = 500;
  bool targeted = false;
  int target = -1;
  LossKind loss_kind = LossKind::logit_margin;
  double square_p = 0.05;
  double simba_step = 0.2;
  double nes_probe = 0.01;
  double nes_step = 0.02;
  int nes_population = 20;

  // eval.* / temp.* / sweep.* / trace.*
  std::vector<int> checkpoints = {100, 2500};
  int attack_samples = 300;  // 0: whole test split
  int ece_bins = 15;
  std::vector<double> temperature_grid;  // empty: default grid
  std::string sweep_param = "alpha";
  std::vector<double> sweep_grid = {0.0, 0.5, 1.0, 2.0};
  int sweep_checkpoint = 0;  // 0: the attack budget
  int trace_sample = 0;

  std::string out_dir = "out";
  std::uint64_t master_seed = 1;

  void set(const std::string& key, const std::string& value);
  static ExperimentConfig from_file(const std::string& path);

  std::string resolved_model_path() const {
    return model_path.empty() ? out_dir + "/model.txt" : model_path;
  }
  std::vector<double> resolved_temperature_grid() const {
    return temperature_grid.empty() ? default_temperature_grid()
                                    : temperature_grid;
  }
  AttackConfig attack_config(AttackMethod m) const {
    AttackConfig a;
    a.method = m;
    a.norm = norm;
    a.epsilon = epsilon;
    a.budget = budget;
    a.targeted = targeted;
    a.target = target;
    a.loss_kind = loss_kind;
    a.square_p = square_p;
    a.simba_step = simba_step;
    a.nes_probe = nes_probe;
    a.nes_step = nes_step;
    a.nes_population = nes_population;
    return a;
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto issp = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n';
  };
  while (!s.empty() && issp(s.front())) s.erase(s.begin());
  while (!s.empty() && issp(s.back())) s.pop_back();
  return s;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

inline int parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw std::invalid_argument("config: bad integer for " + key + ": '" + v +
                                "'");
  }
}

inline double parse_real(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + v +
                                "'");
  }
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::invalid_argument("config: bad flag for " + key + ": '" + v + "'");
}

inline DefenseMode parse_defense(const std::string& v) {
  if (v == "none") return DefenseMode::none;
  if (v == "aaa") return DefenseMode::aaa;
  if (v == "rnd") return DefenseMode::rnd;
  throw std::invalid_argument("config: unknown defense '" + v + "'");
}

inline AttackMethod parse_method(const std::string& v) {
  if (v == "square") return AttackMethod::square;
  if (v == "simba") return AttackMethod::simba;
  if (v == "signhunter") return AttackMethod::signhunter;
  if (v == "nes") return AttackMethod::nes;
  throw std::invalid_argument("config: unknown attack method '" + v + "'");
}

inline LossKind parse_loss(const std::string& v) {
  if (v == "logit-margin") return LossKind::logit_margin;
  if (v == "prob-margin") return LossKind::prob_margin;
  if (v == "cross-entropy") return LossKind::cross_entropy;
  throw std::invalid_argument("config: unknown loss kind '" + v + "'");
}

inline Norm parse_norm(const std::string& v) {
  if (v == "linf") return Norm::linf;
  if (v == "l2") return Norm::l2;
  throw std::invalid_argument("config: unknown norm '" + v + "'");
}

}  // namespace detail

inline void ExperimentConfig::set(const std::string& key,
                                  const std::string& value) {
  using namespace detail;
  if (key == "data.classes") classes = parse_int(value, key);
  else if (key == "data.dim") dim = parse_int(value, key);
  else if (key == "data.per_class") per_class = parse_int(value, key);
  else if (key == "data.spread") spread = parse_real(value, key);
  else if (key == "split.train") train_fraction = parse_real(value, key);
  else if (key == "split.val") val_fraction = parse_real(value, key);
  else if (key == "model.hidden") {
    hidden.clear();
    for (const std::string& h : split_list(value))
      hidden.push_back(parse_int(h, key));
  } else if (key == "model.epochs") epochs = parse_int(value, key);
  else if (key == "model.lr") train_lr = parse_real(value, key);
  else if (key == "model.batch") batch = parse_int(value, key);
  else if (key == "model.path") model_path = value;
  else if (key == "defense.modes") {
    defenses.clear();
    for (const std::string& d : split_list(value))
      defenses.push_back(parse_defense(d));
  } else if (key == "aaa.t") aaa.attractor_interval = parse_real(value, key);
  else if (key == "aaa.alpha") aaa.reverse_step = parse_real(value, key);
  else if (key == "aaa.beta") aaa.calibration_weight = parse_real(value, key);
  else if (key == "aaa.temperature") aaa.temperature = parse_real(value, key);
  else if (key == "aaa.iterations") aaa.iterations = parse_int(value, key);
  else if (key == "aaa.lr") aaa.lr = parse_real(value, key);
  else if (key == "aaa.beta1") aaa.beta1 = parse_real(value, key);
  else if (key == "aaa.beta2") aaa.beta2 = parse_real(value, key);
  else if (key == "aaa.kappa") aaa.target_floor = parse_real(value, key);
  else if (key == "rnd.variance") rnd_variance = parse_real(value, key);
  else if (key == "attack.methods") {
    methods.clear();
    for (const std::string& m : split_list(value))
      methods.push_back(parse_method(m));
  } else if (key == "attack.norm") norm = parse_norm(value);
  else if (key == "attack.epsilon") epsilon = parse_real(value, key);
  else if (key == "attack.budget") budget = parse_int(value, key);
  else if (key == "attack.targeted") targeted = parse_bool(value, key);
  else if (key == "attack.target") target = parse_int(value, key);
  else if (key == "attack.loss") loss_kind = parse_loss(value);
  else if (key == "square.p") square_p = parse_real(value, key);
  else if (key == "simba.step") simba_step = parse_real(value, key);
  else if (key == "nes.probe") nes_probe = parse_real(value, key);
  else if (key == "nes.step") nes_step = parse_real(value, key);
  else if (key == "nes.population") nes_population = parse_int(value, key);
  else if (key == "eval.checkpoints") {
    checkpoints.clear();
    for (const std::string& c : split_list(value))
      checkpoints.push_back(parse_int(c, key));
    for (std::size_t i = 1; i < checkpoints.size(); ++i)
      require(checkpoints[i - 1] < checkpoints[i],
              "config: checkpoints must be ascending");
  } else if (key == "eval.attack_samples") attack_samples = parse_int(value, key);
  else if (key == "eval.ece_bins") ece_bins = parse_int(value, key);
  else if (key == "temp.grid") {
    temperature_grid.clear();
    for (const std::string& t : split_list(value))
      temperature_grid.push_back(parse_real(t, key));
  } else if (key == "sweep.param") {
    require(value == "t" || value == "alpha" || value == "beta",
            "config: sweep.param must be one of t|alpha|beta");
    sweep_param = value;
  } else if (key == "sweep.grid") {
    sweep_grid.clear();
    for (const std::string& g : split_list(value))
      sweep_grid.push_back(parse_real(g, key));
  } else if (key == "sweep.checkpoint") sweep_checkpoint = parse_int(value, key);
  else if (key == "trace.sample") trace_sample = parse_int(value, key);
  else if (key == "out.dir") out_dir = value;
  else if (key == "seed") master_seed = std::stoull(value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected key = value");
    cfg.set(detail::trim(line.substr(0, eq)),
            detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

struct DataSplit {
  LabeledDataset train, val, test;
};

// Seed-shuffled first-fraction split; the calibration (val) and attack
// (test) sets are disjoint by construction.
inline DataSplit prepare_data(const ExperimentConfig& cfg) {
  require(cfg.train_fraction > 0.0 && cfg.val_fraction >= 0.0 &&
              cfg.train_fraction + cfg.val_fraction < 1.0,
          "config: split fractions must leave room for a test set");
  const LabeledDataset full =
      make_blobs(cfg.per_class, cfg.classes, cfg.dim, cfg.spread,
                 derive_seed(cfg.master_seed, seed_channel::dataset));
  std::vector<std::size_t> order(full.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RngStream shuffle_rng(
      derive_seed(cfg.master_seed, seed_channel::split_shuffle));
  shuffle_rng.shuffle(order);

  const std::size_t n = full.size();
  const std::size_t n_train =
      static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(n));
  const std::size_t n_val =
      static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(n));

  DataSplit split;
  split.train.classes = split.val.classes = split.test.classes = cfg.classes;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledDataset& dst = i < n_train             ? split.train
                          : i < n_train + n_val   ? split.val
                                                  : split.test;
    dst.samples.push_back(full.samples[order[i]]);
    dst.labels.push_back(full.labels[order[i]]);
  }
  return split;
}

// Accuracy of defended predictions on quantized inputs.
inline double defended_accuracy(const DefendedModel& model,
                                const LabeledDataset& data, RngStream rng) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (argmax(model.query(data.samples[i], rng)) ==
        static_cast<std::size_t>(data.labels[i]))
      ++hits;
  return data.size() ? static_cast<double>(hits) /
                           static_cast<double>(data.size())
                     : 0.0;
}

struct ConfidenceStats {
  std::vector<double> confidences;
  std::vector<bool> correct;
};

inline ConfidenceStats defended_confidences(const DefendedModel& model,
                                            const LabeledDataset& data,
                                            RngStream rng) {
  ConfidenceStats out;
  out.confidences.reserve(data.size());
  out.correct.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const RealVec p = softmax(model.query(data.samples[i], rng));
    const std::size_t pred = argmax(p);
    out.confidences.push_back(p[pred]);
    out.correct.push_back(pred == static_cast<std::size_t>(data.labels[i]));
  }
  return out;
}

inline DefendedModel make_defended(const MlpWeights& weights,
                                   const ExperimentConfig& cfg,
                                   DefenseMode mode) {
  DefendedModel m;
  m.base = &weights;
  m.mode = mode;
  m.aaa = cfg.aaa;
  m.rnd_variance = cfg.rnd_variance;
  return m;
}

inline std::uint64_t cell_seed(const ExperimentConfig& cfg, DefenseMode d,
                               AttackMethod m) {
  return RngStream(cfg.master_seed)
      .split(seed_channel::attack)
      .split(static_cast<std::uint64_t>(d))
      .split(static_cast<std::uint64_t>(m))
      .seed();
}

struct CellResult {
  DefenseMode defense = DefenseMode::none;
  AttackMethod method = AttackMethod::square;
  std::vector<AttackTrace> traces;
  double clean_accuracy = 0.0;  // defended predictions on the test split
  double ece_value = 0.0;       // defended confidences on the test split
  std::map<int, double> adv_accuracy;  // checkpoint -> accuracy
  double avg_queries = 0.0;
};

// Runs one (defense, method) cell over the attack subset of the test
// split. Every trace is audited against the ball/box/grid and
// strict-decrease invariants before being returned; candidates are
// dropped afterwards unless keep_candidates is set.
inline CellResult run_attack_cell(const ExperimentConfig& cfg,
                                  const MlpWeights& weights,
                                  const DataSplit& split, DefenseMode mode,
                                  AttackMethod method,
                                  bool keep_candidates = false) {
  const DefendedModel model = make_defended(weights, cfg, mode);
  const std::size_t n_attack =
      cfg.attack_samples <= 0
          ? split.test.size()
          : std::min<std::size_t>(split.test.size(),
                                  static_cast<std::size_t>(cfg.attack_samples));
  require(n_attack > 0, "run_attack_cell: empty attack set");

  const std::uint64_t base_seed = cell_seed(cfg, mode, method);
  AttackConfig atk = cfg.attack_config(method);

  CellResult cell;
  cell.defense = mode;
  cell.method = method;
  cell.traces.reserve(n_attack);
  for (std::size_t i = 0; i < n_attack; ++i) {
    atk.seed = RngStream(base_seed).split(i).seed();
    AttackTrace t =
        greedy_loop(model, split.test.samples[i], split.test.labels[i], atk);
    audit_trace(t, split.test.samples[i], atk.norm, atk.epsilon);
    if (!keep_candidates) {
      t.candidates.clear();
      t.candidates.shrink_to_fit();
    }
    cell.traces.push_back(std::move(t));
  }

  const RngStream eval_rng = RngStream(cfg.master_seed)
                                 .split(seed_channel::defended_eval)
                                 .split(static_cast<std::uint64_t>(mode));
  cell.clean_accuracy = defended_accuracy(model, split.test, eval_rng);
  const ConfidenceStats stats =
      defended_confidences(model, split.test, eval_rng);
  cell.ece_value =
      ece(stats.confidences, stats.correct, cfg.ece_bins).ece;
  for (int cp : cfg.checkpoints)
    cell.adv_accuracy[cp] =
        adversarial_accuracy(cell.traces, std::min(cp, cfg.budget));
  cell.avg_queries = average_queries(cell.traces);
  return cell;
}

inline nlohmann::json cell_report_json(const ExperimentConfig& cfg,
                                       const CellResult& cell) {
  nlohmann::json j;
  j["defense"] = to_string(cell.defense);
  j["method"] = to_string(cell.method);
  j["samples"] = cell.traces.size();
  j["budget"] = cfg.budget;
  j["epsilon"] = cfg.epsilon;
  j["norm"] = to_string(cfg.norm);
  j["loss"] = to_string(cfg.loss_kind);
  j["clean_accuracy"] = cell.clean_accuracy;
  j["ece"] = cell.ece_value;
  nlohmann::json adv = nlohmann::json::object();
  for (const auto& [cp, acc] : cell.adv_accuracy)
    adv[std::to_string(cp)] = acc;
  j["adversarial_accuracy"] = adv;
  j["average_queries"] = cell.avg_queries;
  return j;
}

namespace detail {

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << body;
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline std::string cell_dir_name(DefenseMode d, AttackMethod m) {
  return std::string(to_string(d)) + "-" + to_string(m);
}

inline std::string sample_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%05zu.csv", i);
  return buf;
}

}  // namespace detail

struct TrainOutput {
  std::string weights_path;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

inline TrainOutput cmd_train(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const DataSplit split = prepare_data(cfg);
  const TrainResult trained =
      train_mlp(split.train, cfg.hidden, cfg.epochs,
                derive_seed(cfg.master_seed, seed_channel::training),
                cfg.train_lr, cfg.batch);

  TrainOutput out;
  out.weights_path = cfg.resolved_model_path();
  save_weights(trained.weights, out.weights_path);
  out.train_accuracy = trained.train_accuracy;

  DefendedModel plain = make_defended(trained.weights, cfg, DefenseMode::none);
  out.test_accuracy = defended_accuracy(plain, split.test, RngStream(0));

  nlohmann::json j;
  j["weights"] = out.weights_path;
  j["train_accuracy"] = out.train_accuracy;
  j["test_accuracy"] = out.test_accuracy;
  j["train_samples"] = split.train.size();
  j["test_samples"] = split.test.size();
  detail::write_text_file(cfg.out_dir + "/train_report.json", j.dump(2) + "\n");
  return out;
}

struct CalibrateOutput {
  double temperature = 1.0;
  double ece_before = 0.0;  // AAA at T = 1
  double ece_after = 0.0;   // AAA at the tuned T
};

inline CalibrateOutput cmd_calibrate(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const DataSplit split = prepare_data(cfg);
  const MlpWeights weights = load_weights(cfg.resolved_model_path());
  require(!split.val.samples.empty(), "cmd_calibrate: empty validation split");

  std::vector<RealVec> val_logits;
  val_logits.reserve(split.val.size());
  for (const Sample& x : split.val.samples)
    val_logits.push_back(forward(weights, quantize8(x)));

  CalibrateOutput out;
  out.temperature =
      tune_temperature(val_logits, split.val.labels, cfg.aaa,
                       cfg.resolved_temperature_grid(), cfg.ece_bins);

  auto ece_at = [&](double T) {
    AaaConfig c = cfg.aaa;
    c.temperature = T;
    std::vector<double> conf(val_logits.size());
    std::vector<bool> hit(val_logits.size());
    for (std::size_t i = 0; i < val_logits.size(); ++i) {
      const RealVec p = softmax(aaa_postprocess(val_logits[i], c));
      const std::size_t pred = argmax(p);
      conf[i] = p[pred];
      hit[i] = pred == static_cast<std::size_t>(split.val.labels[i]);
    }
    return ece(conf, hit, cfg.ece_bins).ece;
  };
  out.ece_before = ece_at(1.0);
  out.ece_after = ece_at(out.temperature);

  nlohmann::json j;
  j["temperature"] = out.temperature;
  j["ece_at_identity"] = out.ece_before;
  j["ece_at_tuned"] = out.ece_after;
  j["validation_samples"] = split.val.size();
  detail::write_text_file(cfg.out_dir + "/calibration.json", j.dump(2) + "\n");
  return out;
}

// Full attack x defense grid: per-sample trace CSVs plus one JSON report
// per cell and a summary over all cells.
inline std::vector<CellResult> cmd_attack(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const DataSplit split = prepare_data(cfg);
  const MlpWeights weights = load_weights(cfg.resolved_model_path());

  std::vector<CellResult> cells;
  nlohmann::json summary = nlohmann::json::array();
  for (DefenseMode d : cfg.defenses) {
    for (AttackMethod m : cfg.methods) {
      CellResult cell = run_attack_cell(cfg, weights, split, d, m);
      const std::string dir =
          cfg.out_dir + "/traces/" + detail::cell_dir_name(d, m);
      std::filesystem::create_directories(dir);
      for (std::size_t i = 0; i < cell.traces.size(); ++i)
        write_trace_csv(cell.traces[i],
                        dir + "/" + detail::sample_file_name(i));
      const nlohmann::json j = cell_report_json(cfg, cell);
      detail::write_text_file(cfg.out_dir + "/report-" +
                                  detail::cell_dir_name(d, m) + ".json",
                              j.dump(2) + "\n");
      summary.push_back(j);
      cells.push_back(std::move(cell));
    }
  }
  detail::write_text_file(cfg.out_dir + "/summary.json",
                          summary.dump(2) + "\n");
  return cells;
}

struct SweepRow {
  double value = 0.0;
  double clean_accuracy = 0.0;
  double ece_value = 0.0;
  double adv_accuracy = 0.0;
};

// Reruns the AAA attack cell per grid point with only the swept
// hyperparameter varied; one CSV row per point.
inline std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg) {
  require(!cfg.sweep_grid.empty(), "cmd_sweep: empty grid");
  require(!cfg.methods.empty(), "cmd_sweep: no attack method configured");
  std::filesystem::create_directories(cfg.out_dir);
  const DataSplit split = prepare_data(cfg);
  const MlpWeights weights = load_weights(cfg.resolved_model_path());
  const AttackMethod method = cfg.methods.front();
  const int checkpoint =
      cfg.sweep_checkpoint > 0 ? std::min(cfg.sweep_checkpoint, cfg.budget)
                               : cfg.budget;

  std::vector<SweepRow> rows;
  std::ostringstream csv;
  csv << "value,clean_accuracy,ece,adv_accuracy_at_" << checkpoint << "\n";
  for (double v : cfg.sweep_grid) {
    ExperimentConfig point = cfg;
    if (cfg.sweep_param == "t") point.aaa.attractor_interval = v;
    else if (cfg.sweep_param == "alpha") point.aaa.reverse_step = v;
    else point.aaa.calibration_weight = v;

    const CellResult cell =
        run_attack_cell(point, weights, split, DefenseMode::aaa, method);
    SweepRow row;
    row.value = v;
    row.clean_accuracy = cell.clean_accuracy;
    row.ece_value = cell.ece_value;
    row.adv_accuracy = adversarial_accuracy(cell.traces, checkpoint);
    rows.push_back(row);
    csv << detail::format_double(row.value) << ','
        << detail::format_double(row.clean_accuracy) << ','
        << detail::format_double(row.ece_value) << ','
        << detail::format_double(row.adv_accuracy) << "\n";
  }
  detail::write_text_file(
      cfg.out_dir + "/sweep-" + cfg.sweep_param + ".csv", csv.str());
  return rows;
}

// Re-emits the per-query loss CSV for a single sample, using exactly the
// seed the full grid would use for it.
inline std::string cmd_trace(const ExperimentConfig& cfg) {
  require(!cfg.defenses.empty() && !cfg.methods.empty(),
          "cmd_trace: need a defense and a method");
  std::filesystem::create_directories(cfg.out_dir);
  const DataSplit split = prepare_data(cfg);
  const MlpWeights weights = load_weights(cfg.resolved_model_path());
  const DefenseMode d = cfg.defenses.front();
  const AttackMethod m = cfg.methods.front();
  const std::size_t i = static_cast<std::size_t>(cfg.trace_sample);
  require(i < split.test.size(), "cmd_trace: sample index out of range");

  const DefendedModel model = make_defended(weights, cfg, d);
  AttackConfig atk = cfg.attack_config(m);
  atk.seed = RngStream(cell_seed(cfg, d, m)).split(i).seed();
  AttackTrace t =
      greedy_loop(model, split.test.samples[i], split.test.labels[i], atk);
  audit_trace(t, split.test.samples[i], atk.norm, atk.epsilon);

  const std::string path = cfg.out_dir + "/trace-sample" + std::to_string(i) +
                           "-" + detail::cell_dir_name(d, m) + ".csv";
  write_trace_csv(t, path);
  return path;
}

}  // namespace aaalab
