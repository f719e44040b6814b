#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include "madp/random.hpp"
#include "madp/types.hpp"

namespace madp::workloads {

// Histogram with i.i.d. Gamma(2) cell masses, normalized. Stands in for the
// census migration data at the same dimension.
inline DataVector synthetic_data(int d, double n, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("d must be positive");
  if (!(n >= 1)) throw std::invalid_argument("n must be at least 1");
  Rng rng(derive_seed(seed, 0x64617461ull));
  DataVector out;
  out.mass.resize(static_cast<std::size_t>(d));
  double total = 0;
  for (auto& m : out.mass) {
    m = -std::log(rng.uniform01()) - std::log(rng.uniform01());
    total += m;
  }
  for (auto& m : out.mass) m /= total;
  out.records = n;
  return out;
}

enum class WorkloadKind { identity, prefix, hierarchical, random_range, random_point };

inline const char* to_string(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::identity: return "identity";
    case WorkloadKind::prefix: return "prefix";
    case WorkloadKind::hierarchical: return "hierarchical";
    case WorkloadKind::random_range: return "random_range";
    case WorkloadKind::random_point: return "random_point";
  }
  return "?";
}

// Half-open index range a workload is restricted to; {0, 0} means the full
// domain.
struct Subset {
  int lo = 0;
  int hi = 0;
  bool full() const { return lo == 0 && hi == 0; }
};

namespace detail {

inline LinearQuery interval_query(int d, int lo, int hi) {
  LinearQuery q(std::vector<double>(static_cast<std::size_t>(d), 0.0));
  for (int j = lo; j < hi; ++j) q.coef[static_cast<std::size_t>(j)] = 1.0;
  return q;
}

// All nodes of the (possibly unbalanced) binary interval tree, breadth
// first: root, halves, quarters, ... leaves. 2d - 1 queries in total.
inline std::vector<LinearQuery> tree_queries(int d, int lo, int hi) {
  std::vector<LinearQuery> out;
  std::deque<std::pair<int, int>> frontier{{lo, hi}};
  while (!frontier.empty()) {
    auto [a, b] = frontier.front();
    frontier.pop_front();
    out.push_back(interval_query(d, a, b));
    if (b - a >= 2) {
      int mid = a + (b - a + 1) / 2;
      frontier.emplace_back(a, mid);
      frontier.emplace_back(mid, b);
    }
  }
  return out;
}

}  // namespace detail

// Generate a workload of `size` queries (size 0 keeps the natural size of
// the deterministic kinds; deterministic kinds cycle when asked for more).
inline std::vector<LinearQuery> workload(WorkloadKind kind, int d, int size,
                                         Subset subset, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("d must be positive");
  int lo = subset.full() ? 0 : subset.lo;
  int hi = subset.full() ? d : subset.hi;
  if (lo < 0 || hi > d || lo >= hi) throw InvalidSubset("subset must be a non-empty range within [0, d)");

  Rng rng(derive_seed(seed, 0x776f726bull));
  std::vector<LinearQuery> base;
  switch (kind) {
    case WorkloadKind::identity:
      for (int j = lo; j < hi; ++j) base.push_back(detail::interval_query(d, j, j + 1));
      break;
    case WorkloadKind::prefix:
      for (int j = lo; j < hi; ++j) base.push_back(detail::interval_query(d, lo, j + 1));
      break;
    case WorkloadKind::hierarchical:
      base = detail::tree_queries(d, lo, hi);
      break;
    case WorkloadKind::random_range:
      for (int i = 0; i < size; ++i) {
        int a = static_cast<int>(rng.uniform_int(lo, hi));
        int b = static_cast<int>(rng.uniform_int(a, hi));
        base.push_back(detail::interval_query(d, a, b + 1));
      }
      return base;
    case WorkloadKind::random_point:
      for (int i = 0; i < size; ++i) {
        int a = static_cast<int>(rng.uniform_int(lo, hi));
        base.push_back(detail::interval_query(d, a, a + 1));
      }
      return base;
  }
  if (size <= 0 || size == static_cast<int>(base.size())) return base;
  std::vector<LinearQuery> out;
  out.reserve(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) out.push_back(base[static_cast<std::size_t>(i) % base.size()]);
  return out;
}

// Merge per-analyst workloads into one arrival order. Analyst 0 is picked
// with probability p, the rest with (1-p)/(k-1), renormalized over analysts
// that still have queries left.
inline QuerySequence interleave(const std::vector<std::vector<LinearQuery>>& per_analyst,
                                double p, std::uint64_t seed) {
  if (!(p >= 0 && p <= 1)) throw std::invalid_argument("p must lie in [0,1]");
  if (per_analyst.empty()) throw std::invalid_argument("need at least one analyst");
  int k = static_cast<int>(per_analyst.size());
  Rng rng(derive_seed(seed, 0x696e746cull));

  std::vector<double> base_weight(per_analyst.size(), k > 1 ? (1 - p) / (k - 1) : 1.0);
  base_weight[0] = k > 1 ? p : 1.0;

  std::vector<std::size_t> next(per_analyst.size(), 0);
  std::size_t total = 0;
  for (const auto& list : per_analyst) total += list.size();

  QuerySequence seq;
  seq.reserve(total);
  std::vector<double> w(per_analyst.size());
  while (seq.size() < total) {
    double live_weight = 0;
    for (std::size_t i = 0; i < per_analyst.size(); ++i) {
      w[i] = next[i] < per_analyst[i].size() ? base_weight[i] : 0.0;
      live_weight += w[i];
    }
    if (live_weight <= 0) {
      // Only zero-probability analysts remain; fall back to uniform.
      for (std::size_t i = 0; i < per_analyst.size(); ++i)
        w[i] = next[i] < per_analyst[i].size() ? 1.0 : 0.0;
    }
    std::size_t pick = rng.pick_weighted(w);
    seq.push_back({static_cast<AnalystId>(pick), per_analyst[pick][next[pick]]});
    ++next[pick];
  }
  return seq;
}

// floor((alpha * epsilon / k)^{2/3}): the number of queries answerable under
// total error alpha with budget epsilon split across k analysts.
inline long query_limit(double alpha, double epsilon, int k) {
  if (!(alpha > 0) || !(epsilon > 0) || k < 1)
    throw std::invalid_argument("query_limit needs positive arguments");
  double y = alpha * epsilon / k;
  y *= y;  // largest c with c^3 <= (alpha eps / k)^2
  long c = static_cast<long>(std::floor(std::cbrt(y)));
  while (c > 0 && static_cast<double>(c) * c * c > y) --c;
  while (static_cast<double>(c + 1) * (c + 1) * (c + 1) <= y) ++c;
  return c;
}

namespace detail {

// Largest integer c >= 1 with factor^2 c^3 < (alpha eps)^2, or 0 if none.
inline long largest_cube_below(double alpha_eps, double factor) {
  double y = alpha_eps * alpha_eps / (factor * factor);
  long c = static_cast<long>(std::floor(std::cbrt(y))) + 1;
  while (c > 0 && static_cast<double>(c) * c * c >= y) --c;
  return c;
}

inline LinearQuery random_pm_query(Rng& rng, int d, int lo, int hi) {
  while (true) {
    LinearQuery q(std::vector<double>(static_cast<std::size_t>(d), 0.0));
    bool nonzero = false;
    for (int j = lo; j < hi; ++j) {
      double u = rng.uniform01();
      double c = u < 1.0 / 3 ? -1.0 : (u < 2.0 / 3 ? 0.0 : 1.0);
      q.coef[static_cast<std::size_t>(j)] = c;
      nonzero = nonzero || c != 0.0;
    }
    if (nonzero) return q;
  }
}

}  // namespace detail

struct AdversarialSequences {
  QuerySequence q;               // others repeat analyst 0's first d_small queries
  QuerySequence q_prime;         // others ask fresh queries on their own partition
  QuerySequence q_double_prime;  // others ask exactly one query each
  long d_big = 0;
  long d_small = 0;
};

// The shared-prefix sequences from the hardness construction: analyst 0
// floods part 0 with d_big random queries, after which the remaining
// analysts either repeat the prefix (Q), work their own partitions (Q'),
// or ask a single query (Q'').
inline AdversarialSequences adversarial_sequences(double alpha, double epsilon, int k,
                                                  int d, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("need at least two analysts");
  if (d < 2 * k) throw std::invalid_argument("d must be at least 2k");
  double alpha_eps = alpha * epsilon;

  long d_big = detail::largest_cube_below(alpha_eps, 1.0);
  if (d_big < 1) throw NoFeasibleD("no positive d_big with d^{3/2} < alpha*epsilon");
  // The prefix must itself be unanswerable by the pooled budget:
  // k * d_big^{3/2} / epsilon > alpha.
  double cube = static_cast<double>(d_big) * d_big * d_big;
  if (!(static_cast<double>(k) * k * cube > alpha_eps * alpha_eps))
    throw NoFeasibleD("d_big fails the upper sandwich condition");
  long d_small = detail::largest_cube_below(alpha_eps, static_cast<double>(k));
  if (d_small < 1) throw NoFeasibleD("no positive d_small with k*d^{3/2} < alpha*epsilon");

  int width = d / k;
  Rng rng(derive_seed(seed, 0x61647665ull));

  auto draw_distinct = [&](int part, long count) {
    std::vector<LinearQuery> qs;
    std::unordered_set<LinearQuery, QueryHash> seen;
    long attempts = 0;
    while (static_cast<long>(qs.size()) < count) {
      if (++attempts > 1000 * count)
        throw NoFeasibleD("partition too small for the requested distinct queries");
      LinearQuery q = detail::random_pm_query(rng, d, part * width, (part + 1) * width);
      if (seen.insert(q).second) qs.push_back(q);
    }
    return qs;
  };

  std::vector<LinearQuery> prefix = draw_distinct(0, d_big);
  AdversarialSequences out;
  out.d_big = d_big;
  out.d_small = d_small;
  for (const auto& q : prefix) {
    out.q.push_back({0, q});
    out.q_prime.push_back({0, q});
    out.q_double_prime.push_back({0, q});
  }
  for (int i = 1; i < k; ++i) {
    for (long j = 0; j < d_small; ++j)
      out.q.push_back({i, prefix[static_cast<std::size_t>(j)]});
    for (auto& q : draw_distinct(i, d_small)) out.q_prime.push_back({i, std::move(q)});
    out.q_double_prime.push_back({i, draw_distinct(i, 1)[0]});
  }
  return out;
}

// One record per line: analyst index, then the coefficients.
inline void write_sequence(const QuerySequence& seq, std::ostream& os) {
  char buf[64];
  for (const auto& item : seq) {
    os << item.analyst;
    for (double c : item.query.coef) {
      std::snprintf(buf, sizeof buf, "%.17g", c);
      os << ',' << buf;
    }
    os << '\n';
  }
}

inline QuerySequence read_sequence(std::istream& is) {
  QuerySequence seq;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    QueryRecord rec;
    const char* p = line.c_str();
    char* end = nullptr;
    rec.analyst = static_cast<AnalystId>(std::strtol(p, &end, 10));
    if (end == p) throw ConfigError("malformed sequence line: " + line);
    p = end;
    while (*p == ',') {
      ++p;
      double v = std::strtod(p, &end);
      if (end == p) throw ConfigError("malformed sequence line: " + line);
      rec.query.coef.push_back(v);
      p = end;
    }
    seq.push_back(std::move(rec));
  }
  return seq;
}

}  // namespace madp::workloads
