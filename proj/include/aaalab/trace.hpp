#pragma once

// Per-query attack traces, their CSV serialization, and a standalone
// auditor that re-checks the greedy-loop invariants from the recorded
// data alone.

#include <fstream>
#include <string>
#include <vector>

#include "aaalab/model.hpp"
#include "aaalab/numkit.hpp"

namespace aaalab {

enum class Norm { linf, l2 };

inline const char* to_string(Norm n) { return n == Norm::linf ? "linf" : "l2"; }

struct TraceRow {
  int query = 0;              // 1-based query index
  double defended_loss = 0.0; // loss the attacker observed
  double oracle_loss = 0.0;   // undefended margin loss of the same candidate
  bool accepted = false;      // candidate became the attacker's best
  bool correct = false;       // undefended prediction still matches the label
};

struct AttackTrace {
  std::vector<TraceRow> rows;
  // Queried candidates, parallel to rows; cleared after auditing when
  // memory matters. Empty for clean-misclassified samples.
  std::vector<Sample> candidates;
  bool clean_misclassified = false;
  int budget = 0;
  // 1-based query index at which the attacker's best candidate first
  // reached the attack goal; 0 for clean-misclassified, -1 if never.
  int first_success_query = -1;
};

// CSV interface: header `query,defended_loss,oracle_loss,accepted,correct`,
// one row per query, shortest round-trip decimals.
inline void write_trace_csv(const AttackTrace& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  out << "query,defended_loss,oracle_loss,accepted,correct\n";
  for (const TraceRow& r : t.rows)
    out << r.query << ',' << detail::format_double(r.defended_loss) << ','
        << detail::format_double(r.oracle_loss) << ',' << (r.accepted ? 1 : 0)
        << ',' << (r.correct ? 1 : 0) << '\n';
  if (!out)
    throw std::runtime_error("write_trace_csv: write failed for " + path);
}

inline AttackTrace read_trace_csv(const std::string& path, int budget) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_trace_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "query,defended_loss,oracle_loss,accepted,correct")
    throw std::runtime_error(path + ":1: bad trace header");
  AttackTrace t;
  t.budget = budget;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view sv(line);
    std::size_t start = 0;
    for (std::size_t i = 0; i <= sv.size(); ++i) {
      if (i == sv.size() || sv[i] == ',') {
        fields.push_back(sv.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 5)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 5 fields");
    TraceRow r;
    r.query = static_cast<int>(detail::parse_double(fields[0], path, line_no));
    r.defended_loss = detail::parse_double(fields[1], path, line_no);
    r.oracle_loss = detail::parse_double(fields[2], path, line_no);
    r.accepted = detail::parse_double(fields[3], path, line_no) != 0.0;
    r.correct = detail::parse_double(fields[4], path, line_no) != 0.0;
    t.rows.push_back(r);
  }
  t.clean_misclassified = t.rows.empty();
  return t;
}

inline double l2_norm(const RealVec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double linf_norm(const RealVec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Re-checks from the recorded trace that (a) query indices are exactly
// 1..n with n <= budget, (b) accepted defended losses strictly decrease,
// and (c) every queried candidate sits inside the epsilon-ball and the
// unit box on the 8-bit grid. Throws invariant_error on the first breach.
inline void audit_trace(const AttackTrace& t, const Sample& clean, Norm norm,
                        double eps) {
  if (t.clean_misclassified) {
    if (!t.rows.empty())
      throw invariant_error("audit: clean-misclassified trace has rows");
    return;
  }
  if (static_cast<int>(t.rows.size()) > t.budget)
    throw invariant_error("audit: trace longer than budget");

  double last_accepted = 0.0;
  bool have_accepted = false;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const TraceRow& r = t.rows[i];
    if (r.query != static_cast<int>(i) + 1)
      throw invariant_error("audit: query indices not contiguous");
    if (r.accepted) {
      if (have_accepted && !(r.defended_loss < last_accepted))
        throw invariant_error(
            "audit: accepted defended losses not strictly decreasing");
      last_accepted = r.defended_loss;
      have_accepted = true;
    }
  }

  for (const Sample& cand : t.candidates) {
    if (cand.size() != clean.size())
      throw invariant_error("audit: candidate dimension mismatch");
    RealVec delta(cand.size());
    for (std::size_t j = 0; j < cand.size(); ++j) {
      if (!(cand[j] >= 0.0 && cand[j] <= 1.0))
        throw invariant_error("audit: candidate outside [0, 1] box");
      const double grid = cand[j] * 255.0;
      if (std::abs(grid - std::floor(grid + 0.5)) > 1e-9)
        throw invariant_error("audit: candidate off the 8-bit grid");
      delta[j] = cand[j] - clean[j];
    }
    const double d = norm == Norm::linf ? linf_norm(delta) : l2_norm(delta);
    if (d > eps + 1e-8)
      throw invariant_error("audit: candidate outside the epsilon ball");
  }
}

}  // namespace aaalab
