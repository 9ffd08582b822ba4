#pragma once

// Toy classifier: synthetic Gaussian-blob datasets, a small MLP with
// explicit forward/backward passes, 8-bit input quantization, and plain
// text weight persistence with exact round-trip.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "aaalab/numkit.hpp"

namespace aaalab {

// Feature vector in the unit box [0, 1]^dim.
using Sample = RealVec;

inline void require_unit_box(const Sample& x, const char* what) {
  for (double f : x)
    if (!(f >= 0.0 && f <= 1.0))
      throw std::invalid_argument(std::string(what) +
                                  ": feature outside [0, 1]");
}

// Round each feature to the nearest multiple of 1/255, half up.
// Idempotent: quantized grids map to themselves.
inline Sample quantize8(const Sample& x) {
  require_unit_box(x, "quantize8");
  Sample q(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    q[i] = std::floor(x[i] * 255.0 + 0.5) / 255.0;
  return q;
}

struct LabeledDataset {
  std::vector<Sample> samples;
  std::vector<int> labels;
  int classes = 0;

  std::size_t size() const { return samples.size(); }
};

// Isotropic Gaussian clusters around distinct centers drawn inside the
// unit box; samples are clipped back into [0, 1]. Deterministic in seed.
inline LabeledDataset make_blobs(int n_per_class, int classes, int dim,
                                 double spread, std::uint64_t seed) {
  require(n_per_class > 0, "make_blobs: n_per_class must be positive");
  require(classes >= 2, "make_blobs: need at least two classes");
  require(dim >= 2, "make_blobs: need at least two dimensions");
  require(spread > 0.0, "make_blobs: spread must be positive");

  RngStream root(seed);
  RngStream center_rng = root.split(0);

  std::vector<Sample> centers;
  centers.reserve(static_cast<std::size_t>(classes));
  const double min_sep = 0.08 * std::sqrt(static_cast<double>(dim));
  for (int c = 0; c < classes; ++c) {
    Sample ctr(static_cast<std::size_t>(dim));
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (double& f : ctr) f = center_rng.uniform(0.1, 0.9);
      bool far_enough = true;
      for (const Sample& other : centers) {
        double d2 = 0.0;
        for (int j = 0; j < dim; ++j)
          d2 += (ctr[static_cast<std::size_t>(j)] -
                 other[static_cast<std::size_t>(j)]) *
                (ctr[static_cast<std::size_t>(j)] -
                 other[static_cast<std::size_t>(j)]);
        if (std::sqrt(d2) < min_sep) {
          far_enough = false;
          break;
        }
      }
      if (far_enough) break;
    }
    centers.push_back(ctr);
  }

  LabeledDataset ds;
  ds.classes = classes;
  ds.samples.reserve(static_cast<std::size_t>(n_per_class) *
                     static_cast<std::size_t>(classes));
  ds.labels.reserve(ds.samples.capacity());
  for (int c = 0; c < classes; ++c) {
    RngStream cls = root.split(static_cast<std::uint64_t>(c) + 1);
    for (int i = 0; i < n_per_class; ++i) {
      Sample s(static_cast<std::size_t>(dim));
      for (int j = 0; j < dim; ++j) {
        double f = centers[static_cast<std::size_t>(c)]
                          [static_cast<std::size_t>(j)] +
                   spread * cls.normal();
        s[static_cast<std::size_t>(j)] = std::clamp(f, 0.0, 1.0);
      }
      ds.samples.push_back(std::move(s));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

enum class Activation { tanh_fn };

struct MlpLayer {
  std::vector<RealVec> w;  // rows: out_dim, cols: in_dim
  RealVec b;

  std::size_t out_dim() const { return b.size(); }
  std::size_t in_dim() const { return w.empty() ? 0 : w.front().size(); }
};

struct MlpWeights {
  std::vector<MlpLayer> layers;
  std::vector<Activation> hidden_act;  // one per hidden layer

  std::size_t input_dim() const {
    return layers.empty() ? 0 : layers.front().in_dim();
  }
  std::size_t output_dim() const {
    return layers.empty() ? 0 : layers.back().out_dim();
  }
  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    if (layers.empty()) return d;
    d.push_back(layers.front().in_dim());
    for (const MlpLayer& l : layers) d.push_back(l.out_dim());
    return d;
  }
};

// Deterministic forward pass: affine layers with tanh on hidden layers,
// linear output producing the logits.
inline RealVec forward(const MlpWeights& w, const Sample& x) {
  require(!w.layers.empty(), "forward: empty network");
  require(x.size() == w.input_dim(), "forward: input dimension mismatch");
  RealVec a = x;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const MlpLayer& layer = w.layers[l];
    RealVec z(layer.out_dim());
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      double acc = layer.b[r];
      const RealVec& row = layer.w[r];
      for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * a[c];
      z[r] = acc;
    }
    if (l + 1 < w.layers.size())
      for (double& v : z) v = std::tanh(v);
    a = std::move(z);
  }
  return a;
}

namespace detail {

inline std::size_t param_count(const MlpWeights& w) {
  std::size_t n = 0;
  for (const MlpLayer& l : w.layers) n += l.out_dim() * l.in_dim() + l.out_dim();
  return n;
}

inline RealVec pack_params(const MlpWeights& w) {
  RealVec flat;
  flat.reserve(param_count(w));
  for (const MlpLayer& l : w.layers) {
    for (const RealVec& row : l.w) flat.insert(flat.end(), row.begin(), row.end());
    flat.insert(flat.end(), l.b.begin(), l.b.end());
  }
  return flat;
}

inline void unpack_params(const RealVec& flat, MlpWeights& w) {
  std::size_t k = 0;
  for (MlpLayer& l : w.layers) {
    for (RealVec& row : l.w)
      for (double& v : row) v = flat[k++];
    for (double& v : l.b) v = flat[k++];
  }
}

}  // namespace detail

struct TrainResult {
  MlpWeights weights;
  double train_accuracy = 0.0;
};

// Mini-batch Adam on softmax cross-entropy. Glorot-uniform init,
// per-epoch reshuffle, everything deterministic in `seed`.
inline TrainResult train_mlp(const LabeledDataset& data,
                             const std::vector<int>& hidden_dims, int epochs,
                             std::uint64_t seed, double lr = 0.01,
                             int batch_size = 32) {
  require(!data.samples.empty(), "train_mlp: empty dataset");
  require(data.samples.size() == data.labels.size(),
          "train_mlp: samples/labels length mismatch");
  require(epochs >= 0, "train_mlp: negative epochs");
  require(batch_size > 0, "train_mlp: batch_size must be positive");
  for (int y : data.labels)
    require(y >= 0 && y < data.classes, "train_mlp: label out of range");

  const std::size_t dim = data.samples.front().size();
  std::vector<std::size_t> widths;
  widths.push_back(dim);
  for (int h : hidden_dims) {
    require(h > 0, "train_mlp: hidden width must be positive");
    widths.push_back(static_cast<std::size_t>(h));
  }
  widths.push_back(static_cast<std::size_t>(data.classes));

  RngStream root(seed);
  RngStream init_rng = root.split(0);

  MlpWeights w;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    MlpLayer layer;
    const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    layer.w.assign(fan_out, RealVec(fan_in));
    for (RealVec& row : layer.w)
      for (double& v : row) v = init_rng.uniform(-a, a);
    layer.b.assign(fan_out, 0.0);
    w.layers.push_back(std::move(layer));
  }
  w.hidden_act.assign(hidden_dims.size(), Activation::tanh_fn);

  RealVec flat = detail::pack_params(w);
  AdamState opt = AdamState::for_size(flat.size(), lr);
  RngStream shuffle_rng = root.split(1);

  const std::size_t n = data.samples.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const std::size_t n_layers = w.layers.size();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(batch_size)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(batch_size));
      RealVec grad(flat.size(), 0.0);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);

      for (std::size_t bi = start; bi < stop; ++bi) {
        const Sample& x = data.samples[order[bi]];
        const int y = data.labels[order[bi]];

        // forward, keeping activations
        std::vector<RealVec> acts;
        acts.reserve(n_layers + 1);
        acts.push_back(x);
        for (std::size_t l = 0; l < n_layers; ++l) {
          const MlpLayer& layer = w.layers[l];
          RealVec z(layer.out_dim());
          for (std::size_t r = 0; r < layer.out_dim(); ++r) {
            double acc = layer.b[r];
            for (std::size_t c = 0; c < layer.in_dim(); ++c)
              acc += layer.w[r][c] * acts[l][c];
            z[r] = acc;
          }
          if (l + 1 < n_layers)
            for (double& v : z) v = std::tanh(v);
          acts.push_back(std::move(z));
        }

        // backward: d(cross-entropy)/d(logits) = softmax - onehot
        RealVec delta = softmax(acts.back());
        delta[static_cast<std::size_t>(y)] -= 1.0;
        for (double& v : delta) v *= inv_batch;

        std::size_t offset = flat.size();
        for (std::size_t l = n_layers; l-- > 0;) {
          const MlpLayer& layer = w.layers[l];
          offset -= layer.out_dim() * layer.in_dim() + layer.out_dim();
          std::size_t k = offset;
          for (std::size_t r = 0; r < layer.out_dim(); ++r)
            for (std::size_t c = 0; c < layer.in_dim(); ++c)
              grad[k++] += delta[r] * acts[l][c];
          for (std::size_t r = 0; r < layer.out_dim(); ++r)
            grad[k++] += delta[r];
          if (l > 0) {
            RealVec prev(layer.in_dim(), 0.0);
            for (std::size_t r = 0; r < layer.out_dim(); ++r)
              for (std::size_t c = 0; c < layer.in_dim(); ++c)
                prev[c] += layer.w[r][c] * delta[r];
            // tanh' = 1 - a^2 on the hidden activation
            for (std::size_t c = 0; c < layer.in_dim(); ++c)
              prev[c] *= 1.0 - acts[l][c] * acts[l][c];
            delta = std::move(prev);
          }
        }
      }

      adam_step(opt, flat, grad);
      detail::unpack_params(flat, w);
    }
  }

  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (argmax(forward(w, data.samples[i])) ==
        static_cast<std::size_t>(data.labels[i]))
      ++hits;

  TrainResult res;
  res.weights = std::move(w);
  res.train_accuracy = static_cast<double>(hits) / static_cast<double>(n);
  return res;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view tok, const std::string& path,
                           int line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw std::runtime_error(path + ":" + std::to_string(line_no) +
                             ": malformed number '" + std::string(tok) + "'");
  return v;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace detail

// Text format, one value list per line, shortest round-trip decimals:
//   mlpweights v1 <layer dims space-separated>
//   <matrix rows of layer 0> <bias of layer 0> <matrix rows of layer 1> ...
// Hidden activations are tanh in format v1.
inline void save_weights(const MlpWeights& w, const std::string& path) {
  require(!w.layers.empty(), "save_weights: empty network");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_weights: cannot open " + path);
  out << "mlpweights v1";
  for (std::size_t d : w.dims()) out << ' ' << d;
  out << '\n';
  for (const MlpLayer& l : w.layers) {
    for (const RealVec& row : l.w) {
      for (std::size_t c = 0; c < row.size(); ++c)
        out << (c ? " " : "") << detail::format_double(row[c]);
      out << '\n';
    }
    for (std::size_t c = 0; c < l.b.size(); ++c)
      out << (c ? " " : "") << detail::format_double(l.b[c]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_weights: write failed for " + path);
}

inline MlpWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_weights: cannot open " + path);
  std::string line;
  int line_no = 0;

  auto next_line = [&]() {
    if (!std::getline(in, line))
      throw std::runtime_error(path + ":" + std::to_string(line_no + 1) +
                               ": unexpected end of file");
    ++line_no;
  };

  next_line();
  auto head = detail::split_ws(line);
  if (head.size() < 2 || head[0] != "mlpweights")
    throw std::runtime_error(path + ":1: not a weights file");
  if (head[1] != "v1")
    throw std::runtime_error(path + ":1: unsupported version '" +
                             std::string(head[1]) + "'");
  if (head.size() < 4)
    throw std::runtime_error(path + ":1: need at least two layer dims");

  std::vector<std::size_t> dims;
  for (std::size_t i = 2; i < head.size(); ++i) {
    const double d = detail::parse_double(head[i], path, 1);
    if (d < 1 || d != std::floor(d))
      throw std::runtime_error(path + ":1: bad layer dim");
    dims.push_back(static_cast<std::size_t>(d));
  }

  auto read_row = [&](std::size_t expect) {
    next_line();
    auto toks = detail::split_ws(line);
    if (toks.size() != expect)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(expect) +
                               " values, got " + std::to_string(toks.size()));
    RealVec row(expect);
    for (std::size_t i = 0; i < expect; ++i)
      row[i] = detail::parse_double(toks[i], path, line_no);
    return row;
  };

  MlpWeights w;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    MlpLayer layer;
    layer.w.reserve(dims[l + 1]);
    for (std::size_t r = 0; r < dims[l + 1]; ++r)
      layer.w.push_back(read_row(dims[l]));
    layer.b = read_row(dims[l + 1]);
    w.layers.push_back(std::move(layer));
  }
  w.hidden_act.assign(dims.size() >= 2 ? dims.size() - 2 : 0,
                      Activation::tanh_fn);
  return w;
}

}  // namespace aaalab
