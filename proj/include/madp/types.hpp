#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace madp {

// Raised when a matrix that must have full column rank does not.
struct RankDeficient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when no positive partition dimension satisfies the hardness
// constraints for the requested (alpha, epsilon, k).
struct NoFeasibleD : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a workload subset is empty or out of bounds.
struct InvalidSubset : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Raised by closed forms that need k large enough for ln ln k to be defined.
struct DomainTooSmall : std::domain_error {
  using std::domain_error::domain_error;
};

// Raised on malformed configuration files or flag values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using AnalystId = int;

// A linear counting query over a histogram of d cells. Sensitivity is the
// largest absolute coefficient: one record moving in or out of a cell can
// change the count-scale answer by at most that much.
struct LinearQuery {
  std::vector<double> coef;

  LinearQuery() = default;
  explicit LinearQuery(std::vector<double> c) : coef(std::move(c)) {}

  int dim() const { return static_cast<int>(coef.size()); }

  double dot(const std::vector<double>& x) const {
    double acc = 0;
    for (std::size_t j = 0; j < coef.size(); ++j) acc += coef[j] * x[j];
    return acc;
  }

  double sensitivity() const {
    double s = 0;
    for (double c : coef) s = std::max(s, std::abs(c));
    return s;
  }

  bool operator==(const LinearQuery&) const = default;
};

// Bit-exact hash; duplicate queries in this library are literal copies.
struct QueryHash {
  std::size_t operator()(const LinearQuery& q) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (double c : q.coef) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(c));
      std::memcpy(&bits, &c, sizeof(bits));
      h ^= bits;
      h *= 0x100000001b3ull;
    }
    return static_cast<std::size_t>(h);
  }
};

// Normalized histogram plus the number of records it represents. Mechanisms
// answer on the count scale (q.dot(mass) * records).
struct DataVector {
  std::vector<double> mass;
  double records = 1;

  int dim() const { return static_cast<int>(mass.size()); }

  double true_fraction(const LinearQuery& q) const { return q.dot(mass); }
  double true_count(const LinearQuery& q) const { return q.dot(mass) * records; }
};

// One arrival in an online sequence.
struct QueryRecord {
  AnalystId analyst = 0;
  LinearQuery query;
};

using QuerySequence = std::vector<QueryRecord>;

// Shared experiment parameters. Shares are absolute budgets summing to
// epsilon; alpha is the per-query accuracy threshold on the fractional
// scale; p is the arrival skew toward analyst 0.
struct ScenarioConfig {
  int k = 2;
  int d = 86;
  double epsilon = 1.0;
  std::vector<double> shares;
  double alpha = 0.01;
  double p = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (k < 1) throw ConfigError("k must be positive");
    if (d < 1) throw ConfigError("d must be positive");
    if (!(epsilon > 0)) throw ConfigError("epsilon must be positive");
    if (!(alpha > 0)) throw ConfigError("alpha must be positive");
    if (!(p >= 0 && p <= 1)) throw ConfigError("p must lie in [0,1]");
    if (shares.size() != static_cast<std::size_t>(k))
      throw ConfigError("shares must have one entry per analyst");
    double sum = 0;
    for (double s : shares) {
      if (!(s > 0)) throw ConfigError("shares must be positive");
      sum += s;
    }
    if (std::abs(sum - epsilon) > 1e-9 * std::max(1.0, epsilon))
      throw ConfigError("shares must sum to epsilon");
  }

  static std::vector<double> equal_shares(int k, double epsilon) {
    return std::vector<double>(static_cast<std::size_t>(k), epsilon / k);
  }
};

}  // namespace madp
