#pragma once

#include <atomic>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "madp/mechanisms.hpp"
#include "madp/random.hpp"
#include "madp/types.hpp"
#include "madp/workloads.hpp"

namespace madp::metrics {

// ---------------------------------------------------------------------------
// Traces and utility

struct TraceRecord {
  long step = 0;
  AnalystId analyst = 0;
  double true_answer = 0;      // fractional scale
  double released_answer = 0;  // fractional scale; NaN when refused
  mech::AnswerPath path = mech::AnswerPath::direct;
  double budget_spent = 0;
};

using Trace = std::vector<TraceRecord>;

struct UtilityReport {
  std::map<AnalystId, long> per_analyst;
  long total = 0;
  double alpha = 0;
};

// Counts answers with error strictly under alpha. Refused answers are NaN
// and never count.
inline UtilityReport utility(const Trace& trace, double alpha) {
  if (!(alpha > 0)) throw std::invalid_argument("alpha must be positive");
  UtilityReport report;
  report.alpha = alpha;
  for (const auto& rec : trace) {
    report.per_analyst.try_emplace(rec.analyst, 0);
    if (std::abs(rec.released_answer - rec.true_answer) < alpha) {
      ++report.per_analyst[rec.analyst];
      ++report.total;
    }
  }
  return report;
}

// Division policy shared by the ratio metrics: 0/0 is 1 (no evidence of
// violation), positive/0 is +infinity (reported, never clipped).
inline double ratio_or_sentinel(double numerator, double denominator) {
  if (denominator > 0) return numerator / denominator;
  return numerator > 0 ? std::numeric_limits<double>::infinity() : 1.0;
}

inline double max_ratio_error(const std::vector<double>& independent_utils,
                              const std::vector<double>& joint_utils) {
  if (independent_utils.size() != joint_utils.size())
    throw std::invalid_argument("utility vectors must have equal length");
  double worst = 0;
  for (std::size_t i = 0; i < joint_utils.size(); ++i)
    worst = std::max(worst, ratio_or_sentinel(independent_utils[i], joint_utils[i]));
  return worst;
}

// leave_one_out_utils[j][i] is analyst i's utility when analyst j (and its
// budget share) is removed. With a single analyst there are no pairs and the
// convention is 1.
inline double empirical_interference(
    const std::vector<double>& full_utils,
    const std::vector<std::vector<double>>& leave_one_out_utils) {
  std::size_t k = full_utils.size();
  if (k <= 1) return 1.0;
  if (leave_one_out_utils.size() != k)
    throw std::invalid_argument("need one leave-one-out row per analyst");
  double worst = 0;
  for (std::size_t j = 0; j < k; ++j) {
    if (leave_one_out_utils[j].size() != k)
      throw std::invalid_argument("leave-one-out rows must have length k");
    for (std::size_t i = 0; i < k; ++i)
      if (i != j)
        worst = std::max(worst, ratio_or_sentinel(leave_one_out_utils[j][i], full_utils[i]));
  }
  return worst;
}

inline long time_to_completion(std::size_t sequence_size, long stall_count = 0) {
  return static_cast<long>(sequence_size) + stall_count;
}

// ---------------------------------------------------------------------------
// Scenario evaluation

enum class MechanismKind {
  independent_pmw,
  pmw,
  scr,
  round_robin_pmw,
  randomized_pmw,
  laplace_split,
};

inline const char* to_string(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::independent_pmw: return "independent_pmw";
    case MechanismKind::pmw: return "pmw";
    case MechanismKind::scr: return "scr";
    case MechanismKind::round_robin_pmw: return "round_robin_pmw";
    case MechanismKind::randomized_pmw: return "randomized_pmw";
    case MechanismKind::laplace_split: return "laplace_split";
  }
  return "?";
}

inline MechanismKind parse_mechanism_kind(const std::string& name) {
  for (auto kind : {MechanismKind::independent_pmw, MechanismKind::pmw, MechanismKind::scr,
                    MechanismKind::round_robin_pmw, MechanismKind::randomized_pmw,
                    MechanismKind::laplace_split})
    if (name == to_string(kind)) return kind;
  throw ConfigError("unknown mechanism: " + name);
}

using ListsFactory = std::function<std::vector<std::vector<LinearQuery>>(std::uint64_t)>;
using DataFactory = std::function<DataVector(std::uint64_t)>;

struct EvalOptions {
  double records = 50000;        // population size n
  long pmw_expected_updates = 40;
  double scr_gamma = 0.25;
  double scr_lambda = 0;         // 0 derives from the scenario
  long laplace_total = 0;        // 0 derives the capacity from alpha and epsilon
  int jobs = 1;
  bool interference = true;      // leave-one-out runs are the bulk of the cost
  ListsFactory lists_factory;    // defaults to random range queries
  DataFactory data_factory;      // defaults to synthetic_data
};

struct TrialRow {
  long trial = 0;
  AnalystId analyst = 0;
  double utility_joint = 0;
  double utility_independent = 0;
  double ratio = 0;
  double interference = 0;  // NaN when leave-one-out runs are disabled
  long time_steps = 0;
  long stall_count = 0;
};

struct ScenarioReport {
  std::vector<TrialRow> rows;  // k rows per trial, trial-major
  std::vector<double> mean_joint;
  std::vector<double> mean_independent;
  std::vector<std::vector<double>> mean_leave_one_out;  // [excluded][analyst]
  double max_ratio_error = 0;
  double empirical_interference = 0;
  double mean_time_steps = 0;
  double mean_stall_count = 0;
};

namespace detail {

constexpr std::uint64_t kSaltSequence = 0x5e9;
constexpr std::uint64_t kSaltMechanism = 0x4d45;
constexpr std::uint64_t kSaltScheduler = 0x5c4e;
constexpr std::uint64_t kSaltLists = 0x1157;
constexpr std::uint64_t kSaltData = 0xda7a;

struct RunOutput {
  Trace trace;
  long time_steps = 0;
  long stall_count = 0;
};

inline void append_record(Trace& trace, long step, AnalystId analyst, const LinearQuery& q,
                          const DataVector& x, const mech::MechanismAnswer& ans) {
  trace.push_back({step, analyst, x.true_fraction(q), ans.value / x.records, ans.path,
                   ans.budget_spent});
}

inline long laplace_capacity(std::size_t sequence_size, double alpha_count, double epsilon) {
  long limit = workloads::query_limit(alpha_count, epsilon, 1);
  return std::max<long>(1, std::min<long>(static_cast<long>(sequence_size), limit));
}

// One mechanism run over one sequence. Scheduled kinds advance a discrete
// clock; plain kinds take one step per query.
inline RunOutput run_one(MechanismKind kind, const QuerySequence& seq,
                         const std::map<AnalystId, double>& shares, const DataVector& x,
                         const ScenarioConfig& cfg, const EvalOptions& opt,
                         std::uint64_t mech_seed) {
  double eps_run = 0;
  for (auto& [id, s] : shares) eps_run += s;
  double alpha_count = cfg.alpha * x.records;
  int d = x.dim();

  auto pmw_params = [&](double eps) {
    return mech::PmwParams::defaults(eps, cfg.alpha, d, opt.pmw_expected_updates);
  };

  RunOutput out;
  out.trace.reserve(seq.size());

  std::unique_ptr<mech::Mechanism> m;
  switch (kind) {
    case MechanismKind::pmw:
      m = std::make_unique<mech::Pmw>(x, pmw_params(eps_run), mech::make_stream_noise(mech_seed));
      break;
    case MechanismKind::independent_pmw: {
      auto factory = [&](AnalystId, double share, std::uint64_t seed) {
        return std::make_unique<mech::Pmw>(x, pmw_params(share), mech::make_stream_noise(seed));
      };
      m = std::make_unique<mech::Independent>(shares, factory, mech_seed);
      break;
    }
    case MechanismKind::scr: {
      mech::ScrParams params;
      params.gamma = opt.scr_gamma;
      params.lambda = opt.scr_lambda;
      params.alpha_count = alpha_count;
      m = std::make_unique<mech::Scr>(x, shares, params, mech::make_stream_noise(mech_seed));
      break;
    }
    case MechanismKind::laplace_split: {
      long total = opt.laplace_total > 0
                       ? opt.laplace_total
                       : laplace_capacity(seq.size(), alpha_count, eps_run);
      m = std::make_unique<mech::LaplaceSplit>(x, total, eps_run,
                                               mech::make_stream_noise(mech_seed));
      break;
    }
    case MechanismKind::round_robin_pmw:
    case MechanismKind::randomized_pmw: {
      mech::Pmw inner(x, pmw_params(eps_run), mech::make_stream_noise(mech_seed));
      auto sched_kind = kind == MechanismKind::round_robin_pmw
                            ? mech::SchedulerKind::round_robin
                            : mech::SchedulerKind::randomized;
      std::vector<double> weights(static_cast<std::size_t>(cfg.k),
                                  1.0 / static_cast<double>(cfg.k));
      auto res = mech::scheduler_run(sched_kind, inner, seq, weights,
                                     derive_seed(mech_seed, kSaltScheduler));
      for (const auto& a : res.answers)
        append_record(out.trace, a.step, seq[a.seq_index].analyst, seq[a.seq_index].query, x,
                      a.answer);
      out.time_steps = res.time_steps;
      out.stall_count = res.stall_count;
      return out;
    }
  }

  long step = 0;
  for (const auto& item : seq) {
    auto ans = m->answer(item.query, item.analyst);
    append_record(out.trace, ++step, item.analyst, item.query, x, ans);
  }
  out.time_steps = time_to_completion(seq.size());
  return out;
}

struct TrialResult {
  std::vector<double> joint;
  std::vector<double> independent;
  std::vector<std::vector<double>> leave_one_out;
  long time_steps = 0;
  long stall_count = 0;
};

inline std::vector<double> per_analyst_utilities(const Trace& trace, double alpha, int k) {
  auto report = utility(trace, alpha);
  std::vector<double> out(static_cast<std::size_t>(k), 0.0);
  for (auto& [id, count] : report.per_analyst)
    out[static_cast<std::size_t>(id)] = static_cast<double>(count);
  return out;
}

inline TrialResult run_trial(const ScenarioConfig& cfg, MechanismKind kind,
                             const EvalOptions& opt, long trial) {
  std::uint64_t trial_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(trial));
  DataVector x = opt.data_factory
                     ? opt.data_factory(trial_seed)
                     : workloads::synthetic_data(cfg.d, opt.records,
                                                 derive_seed(trial_seed, kSaltData));

  std::vector<std::vector<LinearQuery>> lists;
  if (opt.lists_factory) {
    lists = opt.lists_factory(trial_seed);
  } else {
    for (int i = 0; i < cfg.k; ++i)
      lists.push_back(workloads::workload(workloads::WorkloadKind::random_range, cfg.d, 20, {},
                                          derive_seed(trial_seed, kSaltLists + static_cast<std::uint64_t>(i))));
  }
  if (lists.size() != static_cast<std::size_t>(cfg.k))
    throw ConfigError("lists factory must produce one list per analyst");

  QuerySequence seq =
      workloads::interleave(lists, cfg.p, derive_seed(trial_seed, kSaltSequence));

  std::map<AnalystId, double> shares;
  for (int i = 0; i < cfg.k; ++i)
    shares[i] = cfg.shares[static_cast<std::size_t>(i)];

  // The independent-wrapper identity (ratio exactly 1) requires the wrapper
  // seed to be shared across the joint and per-analyst runs; other kinds get
  // salted per-run seeds.
  std::uint64_t base = derive_seed(trial_seed, kSaltMechanism);
  bool wrapper = kind == MechanismKind::independent_pmw;
  auto run_seed = [&](std::uint64_t salt) { return wrapper ? base : derive_seed(base, salt); };

  TrialResult result;
  auto joint = run_one(kind, seq, shares, x, cfg, opt, run_seed(0));
  result.joint = per_analyst_utilities(joint.trace, cfg.alpha, cfg.k);
  result.time_steps = joint.time_steps;
  result.stall_count = joint.stall_count;

  for (int i = 0; i < cfg.k; ++i) {
    QuerySequence own;
    for (const auto& q : lists[static_cast<std::size_t>(i)]) own.push_back({i, q});
    std::map<AnalystId, double> solo{{i, shares[i]}};
    auto res = run_one(kind, own, solo, x, cfg, opt, run_seed(0x100 + static_cast<std::uint64_t>(i)));
    result.independent.push_back(per_analyst_utilities(res.trace, cfg.alpha, cfg.k)[static_cast<std::size_t>(i)]);
  }

  if (opt.interference && cfg.k > 1) {
    for (int j = 0; j < cfg.k; ++j) {
      QuerySequence rest;
      for (const auto& item : seq)
        if (item.analyst != j) rest.push_back(item);
      std::map<AnalystId, double> others = shares;
      others.erase(j);
      auto res = run_one(kind, rest, others, x, cfg, opt,
                         run_seed(0x10000 + static_cast<std::uint64_t>(j)));
      result.leave_one_out.push_back(per_analyst_utilities(res.trace, cfg.alpha, cfg.k));
    }
  }
  return result;
}

}  // namespace detail

// Runs the full paper protocol: per trial one joint run, k independent runs
// on each analyst's own sequence and share, and (optionally) k leave-one-out
// runs. Ratios are taken on trial means, and also reported per trial.
inline ScenarioReport evaluate_scenario(const ScenarioConfig& cfg, MechanismKind kind,
                                        long trials, const EvalOptions& opt = {}) {
  if (trials < 1) throw std::invalid_argument("trials must be at least 1");
  cfg.validate();

  std::vector<detail::TrialResult> results(static_cast<std::size_t>(trials));
  std::atomic<long> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (long t; (t = next.fetch_add(1)) < trials;) {
      try {
        results[static_cast<std::size_t>(t)] = detail::run_trial(cfg, kind, opt, t);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error)
          first_error = std::make_exception_ptr(
              std::runtime_error("trial " + std::to_string(t) + ": " + e.what()));
        return;
      }
    }
  };
  int jobs = std::max(1, opt.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::size_t k = static_cast<std::size_t>(cfg.k);
  ScenarioReport report;
  report.mean_joint.assign(k, 0.0);
  report.mean_independent.assign(k, 0.0);
  bool loo = opt.interference && cfg.k > 1;
  if (loo) report.mean_leave_one_out.assign(k, std::vector<double>(k, 0.0));

  for (long t = 0; t < trials; ++t) {
    const auto& r = results[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < k; ++i) {
      TrialRow row;
      row.trial = t;
      row.analyst = static_cast<AnalystId>(i);
      row.utility_joint = r.joint[i];
      row.utility_independent = r.independent[i];
      row.ratio = ratio_or_sentinel(r.independent[i], r.joint[i]);
      if (loo) {
        double worst = 0;
        for (std::size_t j = 0; j < k; ++j)
          if (j != i) worst = std::max(worst, ratio_or_sentinel(r.leave_one_out[j][i], r.joint[i]));
        row.interference = worst;
      } else {
        row.interference = std::numeric_limits<double>::quiet_NaN();
      }
      row.time_steps = r.time_steps;
      row.stall_count = r.stall_count;
      report.rows.push_back(row);

      report.mean_joint[i] += r.joint[i];
      report.mean_independent[i] += r.independent[i];
      if (loo)
        for (std::size_t j = 0; j < k; ++j)
          report.mean_leave_one_out[j][i] += r.leave_one_out[j][i];
    }
    report.mean_time_steps += static_cast<double>(r.time_steps);
    report.mean_stall_count += static_cast<double>(r.stall_count);
  }

  double T = static_cast<double>(trials);
  for (std::size_t i = 0; i < k; ++i) {
    report.mean_joint[i] /= T;
    report.mean_independent[i] /= T;
    if (loo)
      for (std::size_t j = 0; j < k; ++j) report.mean_leave_one_out[j][i] /= T;
  }
  report.mean_time_steps /= T;
  report.mean_stall_count /= T;
  report.max_ratio_error = max_ratio_error(report.mean_independent, report.mean_joint);
  report.empirical_interference =
      loo ? empirical_interference(report.mean_joint, report.mean_leave_one_out) : 1.0;
  return report;
}

}  // namespace madp::metrics
