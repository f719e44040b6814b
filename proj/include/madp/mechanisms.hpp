#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <unordered_map>
#include <vector>

#include <Eigen/Cholesky>

#include "madp/linalg.hpp"
#include "madp/random.hpp"
#include "madp/types.hpp"
#include "madp/workloads.hpp"

namespace madp::mech {

// ---------------------------------------------------------------------------
// Budget accounting

struct SpendEvent {
  long step = 0;
  AnalystId analyst = 0;
  double amount = 0;
};

// Simple-composition ledger. Every spend is logged; the total may never
// exceed epsilon, and per-analyst budgets (when present) may never go
// negative. Violations are internal bugs, hence logic_error.
class BudgetLedger {
 public:
  explicit BudgetLedger(double epsilon) : total_(epsilon) {}
  BudgetLedger(double epsilon, std::map<AnalystId, double> shares)
      : total_(epsilon), shares_(std::move(shares)) {
    for (auto& [id, s] : shares_) remaining_[id] = s;
  }

  void spend(long step, AnalystId analyst, double amount) {
    if (amount < 0) throw std::logic_error("negative spend");
    if (spent_ + amount > total_ + 1e-12) throw std::logic_error("composition violated");
    if (!shares_.empty()) {
      auto it = remaining_.find(analyst);
      if (it == remaining_.end()) throw std::logic_error("unknown analyst");
      if (it->second < amount - 1e-12) throw std::logic_error("analyst budget exceeded");
      it->second = std::max(0.0, it->second - amount);
    }
    spent_ += amount;
    log_.push_back({step, analyst, amount});
  }

  double total() const { return total_; }
  double spent() const { return spent_; }
  double remaining() const { return total_ - spent_; }
  double remaining_for(AnalystId analyst) const {
    if (shares_.empty()) return remaining();
    auto it = remaining_.find(analyst);
    return it == remaining_.end() ? 0.0 : it->second;
  }
  const std::vector<SpendEvent>& log() const { return log_; }

 private:
  double total_;
  double spent_ = 0;
  std::map<AnalystId, double> shares_;
  std::map<AnalystId, double> remaining_;
  std::vector<SpendEvent> log_;
};

// ---------------------------------------------------------------------------
// Answers and noise

enum class AnswerPath { direct, cache_hit, reconstruct, synthetic, refused };

inline const char* to_string(AnswerPath p) {
  switch (p) {
    case AnswerPath::direct: return "direct";
    case AnswerPath::cache_hit: return "cache_hit";
    case AnswerPath::reconstruct: return "reconstruct";
    case AnswerPath::synthetic: return "synthetic";
    case AnswerPath::refused: return "refused";
  }
  return "?";
}

struct MechanismAnswer {
  double value = 0;
  AnswerPath path = AnswerPath::direct;
  double budget_spent = 0;
};

// Noise source abstraction: returns Laplace noise at the given scale for the
// given query. The default ignores the query and draws from one stream.
using NoiseFn = std::function<double(const LinearQuery&, double)>;

inline NoiseFn make_stream_noise(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [rng](const LinearQuery&, double scale) { return rng->laplace(scale); };
}

// Coupling oracle: noise is a deterministic function of the query identity,
// scaled by the requested magnitude. Two runs sharing this source see
// comparable noise on matched queries. Test apparatus, not a mechanism.
inline NoiseFn make_query_keyed_noise(std::uint64_t seed) {
  return [seed](const LinearQuery& q, double scale) {
    Rng r(derive_seed(seed, QueryHash{}(q)));
    return r.laplace(scale);
  };
}

class Mechanism {
 public:
  virtual ~Mechanism() = default;
  virtual MechanismAnswer answer(const LinearQuery& q, AnalystId analyst) = 0;
  virtual const BudgetLedger& ledger() const = 0;
};

// ---------------------------------------------------------------------------
// Uniform-split Laplace

// Splits epsilon evenly across a declared number of answers and refuses
// everything after that.
class LaplaceSplit : public Mechanism {
 public:
  LaplaceSplit(const DataVector& x, long total_queries, double epsilon, NoiseFn noise)
      : x_(&x), total_queries_(total_queries), per_query_(epsilon / total_queries),
        noise_(std::move(noise)), ledger_(epsilon) {
    if (total_queries < 1) throw std::invalid_argument("total_queries must be positive");
    if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  }

  MechanismAnswer answer(const LinearQuery& q, AnalystId analyst) override {
    ++step_;
    if (answered_ >= total_queries_)
      return {std::numeric_limits<double>::quiet_NaN(), AnswerPath::refused, 0};
    ++answered_;
    ledger_.spend(step_, analyst, per_query_);
    double value = x_->true_count(q) + noise_(q, q.sensitivity() / per_query_);
    return {value, AnswerPath::direct, per_query_};
  }

  const BudgetLedger& ledger() const override { return ledger_; }

 private:
  const DataVector* x_;
  long total_queries_;
  double per_query_;
  NoiseFn noise_;
  BudgetLedger ledger_;
  long answered_ = 0;
  long step_ = 0;
};

// ---------------------------------------------------------------------------
// Private Multiplicative Weights

struct PmwParams {
  double epsilon = 1;
  double alpha = 0.01;        // fractional accuracy target
  double threshold = 0;       // defaults to alpha / 2
  double learning_rate = 0;   // defaults to alpha / 8
  double update_budget = 0;   // defaults to epsilon / (2 * expected_updates)
  long expected_updates = 0;  // defaults to 2 * d

  static PmwParams defaults(double epsilon, double alpha, int d, long expected_updates = 0) {
    PmwParams p;
    p.epsilon = epsilon;
    p.alpha = alpha;
    p.expected_updates = expected_updates > 0 ? expected_updates : 2L * d;
    p.threshold = alpha / 2;
    p.learning_rate = alpha / 8;
    p.update_budget = epsilon / (2.0 * static_cast<double>(p.expected_updates));
    return p;
  }
};

// Maintains a synthetic histogram; answers from it for free when a noisy
// difference test passes, otherwise spends update_budget on a direct answer
// and moves the synthetic weights toward the truth.
class Pmw : public Mechanism {
 public:
  Pmw(const DataVector& x, PmwParams params, NoiseFn noise)
      : x_(&x), params_(params), noise_(std::move(noise)), ledger_(params.epsilon),
        synthetic_(x.mass.size(), 1.0 / static_cast<double>(x.mass.size())) {
    if (!(params_.threshold > 0) || !(params_.learning_rate > 0) ||
        !(params_.update_budget > 0))
      throw std::invalid_argument("PMW parameters must be positive");
  }

  MechanismAnswer answer(const LinearQuery& q, AnalystId analyst) override {
    ++step_;
    double synth_frac = q.dot(synthetic_);
    double n = x_->records;
    if (ledger_.remaining() < params_.update_budget)
      return {synth_frac * n, AnswerPath::synthetic, 0};

    double true_frac = x_->true_fraction(q);
    double test_scale = q.sensitivity() * 2.0 / (params_.update_budget * n);
    double dhat = (true_frac - synth_frac) + noise_(q, test_scale);
    if (std::abs(dhat) <= params_.threshold)
      return {synth_frac * n, AnswerPath::synthetic, 0};

    double value = true_frac * n + noise_(q, q.sensitivity() / params_.update_budget);
    ledger_.spend(step_, analyst, params_.update_budget);
    double direction = dhat > 0 ? 1.0 : -1.0;
    double total = 0;
    for (std::size_t j = 0; j < synthetic_.size(); ++j) {
      synthetic_[j] *= std::exp(direction * params_.learning_rate * q.coef[j]);
      total += synthetic_[j];
    }
    for (double& s : synthetic_) s /= total;
    return {value, AnswerPath::direct, params_.update_budget};
  }

  const BudgetLedger& ledger() const override { return ledger_; }
  const std::vector<double>& synthetic() const { return synthetic_; }

 private:
  const DataVector* x_;
  PmwParams params_;
  NoiseFn noise_;
  BudgetLedger ledger_;
  std::vector<double> synthetic_;
  long step_ = 0;
};

// ---------------------------------------------------------------------------
// Seeded Cache and Reconstruct

// Strategy rows with noisy answers and per-row budgets. Reconstruction is
// the budget-scaled least-squares estimate; the normal equations are
// maintained incrementally so repeated reconstructions stay cheap.
class Cache {
 public:
  struct Row {
    LinearQuery query;
    double answer = 0;
    double budget = 0;
  };

  explicit Cache(int d)
      : d_(d), normal_(Eigen::MatrixXd::Zero(d, d)), moment_(Eigen::VectorXd::Zero(d)) {}

  const Row* find(const LinearQuery& q) const {
    auto it = index_.find(q);
    return it == index_.end() ? nullptr : &rows_[it->second];
  }

  void append(LinearQuery q, double answer, double budget) {
    Eigen::Map<const Eigen::VectorXd> qv(q.coef.data(), d_);
    normal_.selfadjointView<Eigen::Lower>().rankUpdate(qv, budget * budget);
    moment_ += (budget * budget * answer) * qv;
    dirty_ = true;
    index_.emplace(q, rows_.size());
    rows_.push_back({std::move(q), answer, budget});
  }

  // q . x_hat where x_hat solves the budget-scaled least-squares problem.
  double reconstruct(const LinearQuery& q) {
    if (dirty_) {
      auto llt = normal_.selfadjointView<Eigen::Lower>().llt();
      if (llt.info() != Eigen::Success)
        throw RankDeficient("cache does not span the data domain");
      estimate_ = llt.solve(moment_);
      dirty_ = false;
    }
    double out = 0;
    for (int j = 0; j < d_; ++j) out += q.coef[static_cast<std::size_t>(j)] * estimate_(j);
    return out;
  }

  const std::vector<Row>& rows() const { return rows_; }
  int dim() const { return d_; }

  linalg::Matrix row_matrix() const {
    linalg::Matrix m(static_cast<Eigen::Index>(rows_.size()), d_);
    for (std::size_t r = 0; r < rows_.size(); ++r)
      for (int j = 0; j < d_; ++j) m(static_cast<Eigen::Index>(r), j) = rows_[r].query.coef[static_cast<std::size_t>(j)];
    return m;
  }
  linalg::Vector budget_vector() const {
    linalg::Vector v(static_cast<Eigen::Index>(rows_.size()));
    for (std::size_t r = 0; r < rows_.size(); ++r) v(static_cast<Eigen::Index>(r)) = rows_[r].budget;
    return v;
  }
  linalg::Vector answer_vector() const {
    linalg::Vector v(static_cast<Eigen::Index>(rows_.size()));
    for (std::size_t r = 0; r < rows_.size(); ++r) v(static_cast<Eigen::Index>(r)) = rows_[r].answer;
    return v;
  }

 private:
  int d_;
  std::vector<Row> rows_;
  std::unordered_map<LinearQuery, std::size_t, QueryHash> index_;
  Eigen::MatrixXd normal_;
  Eigen::VectorXd moment_;
  Eigen::VectorXd estimate_;
  bool dirty_ = true;
};

struct ScrParams {
  double gamma = 0.25;
  double lambda = 0;  // 0 derives (1-gamma) * min share / c_target
  workloads::WorkloadKind basis = workloads::WorkloadKind::hierarchical;
  double alpha_count = 0;  // count-scale threshold used to derive c_target
};

// Algorithm: seed a basis cache with gamma * epsilon, then answer per query
// at fixed cost lambda (reusing exact cache hits for free) until an
// analyst's budget runs dry, after which their queries are reconstructed
// from the cache.
class Scr : public Mechanism {
 public:
  Scr(const DataVector& x, std::map<AnalystId, double> shares, ScrParams params,
      NoiseFn noise)
      : x_(&x), params_(params), noise_(std::move(noise)),
        epsilon_(sum_shares(shares)), ledger_(epsilon_, shares), cache_(x.dim()) {
    if (!(params_.gamma >= 0 && params_.gamma <= 1))
      throw std::invalid_argument("gamma must lie in [0,1]");

    double min_share = epsilon_;
    for (auto& [id, s] : shares) min_share = std::min(min_share, s);
    lambda_ = params_.lambda;
    if (lambda_ <= 0) {
      long c_target = std::max<long>(
          1, workloads::query_limit(std::max(params_.alpha_count, 1e-9), epsilon_,
                                    static_cast<int>(shares.size())));
      lambda_ = (1 - params_.gamma) * min_share / static_cast<double>(c_target);
    }
    if (!(lambda_ > 0))
      throw std::invalid_argument("lambda must be positive; pass one explicitly when gamma = 1");

    // Phase 1: seed the cache, charging every analyst gamma times its share.
    auto basis = workloads::workload(params_.basis, x.dim(), 0, {}, 0);
    double row_budget = params_.gamma * epsilon_ / static_cast<double>(basis.size());
    for (auto& b : basis) {
      double value = row_budget > 0
                         ? x.true_count(b) + noise_(b, b.sensitivity() / row_budget)
                         : 0.0;
      if (row_budget > 0) cache_.append(std::move(b), value, row_budget);
    }
    for (auto& [id, s] : shares) ledger_.spend(0, id, params_.gamma * s);
    if (params_.gamma > 0 && linalg::rank(cache_.row_matrix()) < x.dim())
      throw RankDeficient("seed basis does not span the data domain");
  }

  MechanismAnswer answer(const LinearQuery& q, AnalystId analyst) override {
    ++step_;
    if (ledger_.remaining_for(analyst) + 1e-12 * lambda_ >= lambda_) {
      if (const Cache::Row* row = cache_.find(q))
        return {row->answer, AnswerPath::cache_hit, 0};
      double value = x_->true_count(q) + noise_(q, q.sensitivity() / lambda_);
      ledger_.spend(step_, analyst, lambda_);
      cache_.append(q, value, lambda_);
      return {value, AnswerPath::direct, lambda_};
    }
    return {cache_.reconstruct(q), AnswerPath::reconstruct, 0};
  }

  const BudgetLedger& ledger() const override { return ledger_; }
  const Cache& cache() const { return cache_; }
  double lambda() const { return lambda_; }

 private:
  static double sum_shares(const std::map<AnalystId, double>& shares) {
    if (shares.empty()) throw std::invalid_argument("need at least one analyst share");
    double total = 0;
    for (auto& [id, s] : shares) {
      if (!(s > 0)) throw std::invalid_argument("shares must be positive");
      total += s;
    }
    return total;
  }

  const DataVector* x_;
  ScrParams params_;
  NoiseFn noise_;
  double epsilon_;
  BudgetLedger ledger_;
  Cache cache_;
  double lambda_ = 0;
  long step_ = 0;
};

// ---------------------------------------------------------------------------
// Independent wrapper

// One isolated inner mechanism per analyst, each owning that analyst's
// share. Inner seeds depend only on (seed, analyst), so an analyst's answers
// are identical no matter which other analysts are present.
class Independent : public Mechanism {
 public:
  using Factory =
      std::function<std::unique_ptr<Mechanism>(AnalystId, double, std::uint64_t)>;

  Independent(std::map<AnalystId, double> shares, Factory factory, std::uint64_t seed)
      : ledger_(total_of(shares), shares) {
    for (auto& [id, s] : shares)
      inner_.emplace(id, factory(id, s, derive_seed(seed, static_cast<std::uint64_t>(id))));
  }

  MechanismAnswer answer(const LinearQuery& q, AnalystId analyst) override {
    ++step_;
    auto it = inner_.find(analyst);
    if (it == inner_.end()) throw std::logic_error("unknown analyst");
    MechanismAnswer ans = it->second->answer(q, analyst);
    if (ans.budget_spent > 0) ledger_.spend(step_, analyst, ans.budget_spent);
    return ans;
  }

  const BudgetLedger& ledger() const override { return ledger_; }

 private:
  static double total_of(const std::map<AnalystId, double>& shares) {
    double t = 0;
    for (auto& [id, s] : shares) t += s;
    return t;
  }

  std::map<AnalystId, std::unique_ptr<Mechanism>> inner_;
  BudgetLedger ledger_;
  long step_ = 0;
};

// ---------------------------------------------------------------------------
// Query schedulers

enum class SchedulerKind { round_robin, randomized };

struct ScheduledAnswer {
  long step = 0;           // discrete time of the answer
  std::size_t seq_index = 0;  // position in the arrival sequence
  MechanismAnswer answer;
};

struct SchedulerResult {
  std::vector<ScheduledAnswer> answers;
  long time_steps = 0;
  long stall_count = 0;
};

// Discrete-time simulation: at each step one arrival lands in its analyst's
// buffer, then the scheduler serves one analyst. Round-robin rotates the
// turn over analysts that still have unanswered queries anywhere and waits
// (stalling) while the turn's buffer is empty; randomized samples the
// analyst from `weights` renormalized over analysts with unanswered queries
// and stalls when the sample's buffer is empty.
inline SchedulerResult scheduler_run(SchedulerKind kind, Mechanism& inner,
                                     const QuerySequence& seq,
                                     const std::vector<double>& weights,
                                     std::uint64_t seed) {
  std::size_t k = weights.size();
  for (const auto& item : seq)
    if (item.analyst < 0 || static_cast<std::size_t>(item.analyst) >= k)
      throw std::invalid_argument("analyst index outside the weight vector");

  std::vector<std::deque<std::size_t>> buffer(k);
  std::vector<long> unanswered(k, 0);
  for (const auto& item : seq) ++unanswered[static_cast<std::size_t>(item.analyst)];

  Rng rng(derive_seed(seed, 0x7363686544ull));
  SchedulerResult out;
  out.answers.reserve(seq.size());

  std::size_t arrived = 0;
  std::size_t answered = 0;
  std::size_t turn = 0;
  long t = 0;
  std::vector<double> live(k);
  while (answered < seq.size()) {
    ++t;
    if (arrived < seq.size()) {
      buffer[static_cast<std::size_t>(seq[arrived].analyst)].push_back(arrived);
      ++arrived;
    }

    std::size_t pick = k;
    if (kind == SchedulerKind::round_robin) {
      while (unanswered[turn] == 0) turn = (turn + 1) % k;
      pick = turn;
    } else {
      double total = 0;
      for (std::size_t i = 0; i < k; ++i) {
        live[i] = unanswered[i] > 0 ? weights[i] : 0.0;
        total += live[i];
      }
      if (total <= 0)
        for (std::size_t i = 0; i < k; ++i) live[i] = unanswered[i] > 0 ? 1.0 : 0.0;
      pick = rng.pick_weighted(live);
    }

    if (buffer[pick].empty()) {
      ++out.stall_count;
      continue;
    }
    std::size_t idx = buffer[pick].front();
    buffer[pick].pop_front();
    --unanswered[pick];
    ++answered;
    if (kind == SchedulerKind::round_robin) turn = (turn + 1) % k;
    out.answers.push_back({t, idx, inner.answer(seq[idx].query, seq[idx].analyst)});
  }
  out.time_steps = t;
  return out;
}

// Number of under-threshold answers the inner mechanism must support for a
// scheduler to satisfy the sharing incentive. The (m-1) ln ln k term is
// clamped at zero where ln ln k is not positive.
inline double scheduler_efficiency_threshold_real(long k, long quota,
                                                  double weight_ratio = 1.0) {
  if (k < 2) throw DomainTooSmall("threshold needs k >= 2");
  if (quota < 1) throw std::invalid_argument("quota must be at least 1");
  double lk = std::log(static_cast<double>(k));
  double loglog = lk > 1e-300 ? std::log(lk) : 0.0;
  double tail = std::max(0.0, static_cast<double>(quota - 1) * loglog);
  return weight_ratio * static_cast<double>(k) * (lk + tail);
}

inline double scheduler_efficiency_threshold_real(long k, const std::vector<long>& quotas,
                                                  const std::vector<double>& weights) {
  if (quotas.empty() || quotas.size() != weights.size())
    throw std::invalid_argument("need one quota and weight per analyst");
  long m_max = 1;
  for (long m : quotas) m_max = std::max(m_max, m);
  double w_max = weights[0], w_min = weights[0];
  for (double w : weights) {
    if (!(w > 0)) throw std::invalid_argument("weights must be positive");
    w_max = std::max(w_max, w);
    w_min = std::min(w_min, w);
  }
  return scheduler_efficiency_threshold_real(k, m_max, w_max / w_min);
}

inline long scheduler_efficiency_threshold(long k, long quota, double weight_ratio = 1.0) {
  return static_cast<long>(std::ceil(scheduler_efficiency_threshold_real(k, quota, weight_ratio)));
}

}  // namespace madp::mech
