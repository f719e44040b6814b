#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "madp/coupon.hpp"
#include "madp/metrics.hpp"
#include "madp/workloads.hpp"

namespace madp::experiments {

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
  ScenarioConfig scenario;
  long trials = 200;
  int jobs = 1;
  double records = 50000;
  long expected_updates = 40;
  double gamma = 0.25;
  double lambda = 0;
  long queries_per_analyst = 0;  // 0 means the command default
  std::string out = "out";
  std::string k_list = "2,3,5,10,20,50";  // coupon table rows
  std::string m_list = "1,2,3";

  static RunConfig defaults_for(const std::string& command) {
    RunConfig cfg;
    cfg.scenario.epsilon = 1.0;
    cfg.scenario.alpha = 0.01;
    cfg.scenario.d = 86;
    cfg.scenario.p = 0.5;
    cfg.scenario.seed = 1;
    if (command == "motivate") {
      cfg.scenario.k = 2;
      cfg.queries_per_analyst = 75;
    } else if (command == "sweep") {
      cfg.scenario.k = 10;
      cfg.queries_per_analyst = 40;
    } else if (command == "adversarial") {
      cfg.scenario.k = 2;
      cfg.scenario.alpha = 1000;  // count scale for the lower-bound construction
      cfg.trials = 50;
    } else if (command == "coupon") {
      cfg.scenario.k = 2;
    } else {
      throw ConfigError("unknown command: " + command);
    }
    cfg.scenario.shares = ScenarioConfig::equal_shares(cfg.scenario.k, cfg.scenario.epsilon);
    return cfg;
  }
};

inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key or value");
    out[key] = value;
  }
  return out;
}

namespace detail {

inline double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + key + ": " + value);
  }
  if (used != value.size()) throw ConfigError("bad numeric value for " + key + ": " + value);
  return v;
}

inline long parse_count(const std::string& key, const std::string& value) {
  double v = parse_real(key, value);
  long n = static_cast<long>(v);
  if (static_cast<double>(n) != v) throw ConfigError(key + " must be an integer: " + value);
  return n;
}

inline std::vector<long> parse_count_list(const std::string& key, const std::string& csv) {
  std::vector<long> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_count(key, item));
  if (out.empty()) throw ConfigError(key + " must not be empty");
  return out;
}

}  // namespace detail

// Applies file values over defaults; unknown keys are rejected so typos fail
// loudly. Command-line flags are applied by the caller afterwards.
inline void apply_config(RunConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "k") cfg.scenario.k = static_cast<int>(detail::parse_count(key, value));
    else if (key == "d") cfg.scenario.d = static_cast<int>(detail::parse_count(key, value));
    else if (key == "epsilon") cfg.scenario.epsilon = detail::parse_real(key, value);
    else if (key == "alpha") cfg.scenario.alpha = detail::parse_real(key, value);
    else if (key == "seed") cfg.scenario.seed = static_cast<std::uint64_t>(detail::parse_count(key, value));
    else if (key == "trials") cfg.trials = detail::parse_count(key, value);
    else if (key == "jobs") cfg.jobs = static_cast<int>(detail::parse_count(key, value));
    else if (key == "records") cfg.records = detail::parse_real(key, value);
    else if (key == "expected_updates") cfg.expected_updates = detail::parse_count(key, value);
    else if (key == "gamma") cfg.gamma = detail::parse_real(key, value);
    else if (key == "lambda") cfg.lambda = detail::parse_real(key, value);
    else if (key == "queries_per_analyst") cfg.queries_per_analyst = detail::parse_count(key, value);
    else if (key == "out") cfg.out = value;
    else if (key == "k_list") cfg.k_list = value;
    else if (key == "m_list") cfg.m_list = value;
    else throw ConfigError("unknown config key: " + key);
  }
  cfg.scenario.shares = ScenarioConfig::equal_shares(cfg.scenario.k, cfg.scenario.epsilon);
}

// ---------------------------------------------------------------------------
// CSV plumbing

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* kRawHeader =
    "trial,mechanism,p,epsilon,alpha,analyst,utility_joint,utility_independent,ratio,"
    "interference,time_steps,stalls";

inline void write_raw_rows(std::ofstream& out, const std::string& mechanism, double p,
                           double epsilon, double alpha,
                           const std::vector<metrics::TrialRow>& rows) {
  for (const auto& r : rows) {
    out << r.trial << ',' << mechanism << ',' << fmt(p) << ',' << fmt(epsilon) << ','
        << fmt(alpha) << ',' << r.analyst << ',' << fmt(r.utility_joint) << ','
        << fmt(r.utility_independent) << ',' << fmt(r.ratio) << ',' << fmt(r.interference)
        << ',' << r.time_steps << ',' << r.stall_count << '\n';
  }
}

inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  double rank = q * static_cast<double>(values.size() - 1);
  std::size_t lo = static_cast<std::size_t>(rank);
  double frac = rank - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] * (1 - frac) + values[lo + 1] * frac;
}

struct SummaryRow {
  double p = 0;
  std::string mechanism;
  int analyst = -1;  // -1 marks scenario-level statistics
  std::string statistic;
  double value = 0;
  double lo90 = 0;
  double hi90 = 0;
};

inline void write_summary(const std::string& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path);
  out << "p,mechanism,analyst,statistic,value,lo90,hi90\n";
  for (const auto& r : rows)
    out << fmt(r.p) << ',' << r.mechanism << ',' << r.analyst << ',' << r.statistic << ','
        << fmt(r.value) << ',' << fmt(r.lo90) << ',' << fmt(r.hi90) << '\n';
}

// Percentile intervals over trials (5th to 95th); the interval method is
// recorded in run_meta.txt alongside the configuration.
inline void summarize_point(std::vector<SummaryRow>& out, double p, const std::string& label,
                            int k, long trials, const metrics::ScenarioReport& report,
                            bool with_interference) {
  auto interval = [&](auto&& extract, double value, int analyst, const char* stat) {
    std::vector<double> per_trial;
    per_trial.reserve(static_cast<std::size_t>(trials));
    for (long t = 0; t < trials; ++t) per_trial.push_back(extract(t));
    out.push_back({p, label, analyst, stat, value, percentile(per_trial, 0.05),
                   percentile(per_trial, 0.95)});
  };
  auto row_of = [&](long t, int i) -> const metrics::TrialRow& {
    return report.rows[static_cast<std::size_t>(t) * static_cast<std::size_t>(k) +
                       static_cast<std::size_t>(i)];
  };

  for (int i = 0; i < k; ++i) {
    interval([&](long t) { return row_of(t, i).utility_joint; },
             report.mean_joint[static_cast<std::size_t>(i)], i, "utility_joint");
    interval([&](long t) { return row_of(t, i).utility_independent; },
             report.mean_independent[static_cast<std::size_t>(i)], i, "utility_independent");
    interval([&](long t) { return row_of(t, i).ratio; },
             metrics::ratio_or_sentinel(report.mean_independent[static_cast<std::size_t>(i)],
                                        report.mean_joint[static_cast<std::size_t>(i)]),
             i, "ratio");
  }
  interval(
      [&](long t) {
        double worst = 0;
        for (int i = 0; i < k; ++i) worst = std::max(worst, row_of(t, i).ratio);
        return worst;
      },
      report.max_ratio_error, -1, "max_ratio_error");
  if (with_interference)
    interval(
        [&](long t) {
          double worst = 0;
          for (int i = 0; i < k; ++i) worst = std::max(worst, row_of(t, i).interference);
          return worst;
        },
        report.empirical_interference, -1, "empirical_interference");
  interval([&](long t) { return static_cast<double>(row_of(t, 0).time_steps); },
           report.mean_time_steps, -1, "time_steps");
  interval([&](long t) { return static_cast<double>(row_of(t, 0).stall_count); },
           report.mean_stall_count, -1, "stalls");
}

inline void write_meta(const std::string& path, const std::string& command,
                       const RunConfig& cfg, const std::vector<std::string>& notes) {
  std::ofstream out(path);
  out << "command: " << command << '\n';
  out << "k: " << cfg.scenario.k << '\n';
  out << "d: " << cfg.scenario.d << '\n';
  out << "epsilon: " << fmt(cfg.scenario.epsilon) << '\n';
  out << "alpha: " << fmt(cfg.scenario.alpha) << '\n';
  out << "seed: " << cfg.scenario.seed << '\n';
  out << "trials: " << cfg.trials << '\n';
  out << "records: " << fmt(cfg.records) << '\n';
  out << "intervals: percentile 5-95 over trials\n";
  for (const auto& n : notes) out << n << '\n';
}

// ---------------------------------------------------------------------------
// Workload profiles

namespace detail {

// Two analysts with the same query pattern on disjoint halves of the domain:
// analyst 1's list is analyst 0's shifted into the upper half.
inline metrics::ListsFactory mirrored_halves(int d, long per_analyst) {
  return [d, per_analyst](std::uint64_t trial_seed) {
    int half = d / 2;
    long points = per_analyst / 2;
    long ranges = per_analyst - points;
    auto base = workloads::workload(workloads::WorkloadKind::random_point, d, points,
                                    {0, half}, derive_seed(trial_seed, 0xba5e));
    auto more = workloads::workload(workloads::WorkloadKind::random_range, d, ranges,
                                    {0, half}, derive_seed(trial_seed, 0xbabe));
    base.insert(base.end(), more.begin(), more.end());

    std::vector<LinearQuery> shifted;
    shifted.reserve(base.size());
    for (const auto& q : base) {
      LinearQuery s{std::vector<double>(static_cast<std::size_t>(d), 0.0)};
      for (int j = 0; j < half; ++j)
        s.coef[static_cast<std::size_t>(j + half)] = q.coef[static_cast<std::size_t>(j)];
      shifted.push_back(std::move(s));
    }
    return std::vector<std::vector<LinearQuery>>{std::move(base), std::move(shifted)};
  };
}

// Heterogeneous analyst pool: workload kinds cycle per analyst; the first
// half of the analysts query the full domain, the rest a random half.
inline metrics::ListsFactory mixed_pool(int k, int d, long per_analyst) {
  return [k, d, per_analyst](std::uint64_t trial_seed) {
    using workloads::WorkloadKind;
    const WorkloadKind kinds[] = {WorkloadKind::random_range, WorkloadKind::identity,
                                  WorkloadKind::prefix, WorkloadKind::hierarchical};
    std::vector<std::vector<LinearQuery>> lists;
    for (int i = 0; i < k; ++i) {
      workloads::Subset subset{};
      if (i >= k / 2) {
        Rng rng(derive_seed(trial_seed, 0x5b5e7 + static_cast<std::uint64_t>(i)));
        int half = d / 2;
        int lo = static_cast<int>(rng.uniform_int(0, d - half + 1));
        subset = {lo, lo + half};
      }
      lists.push_back(workloads::workload(kinds[i % 4], d, per_analyst, subset,
                                          derive_seed(trial_seed, 0x11575 + static_cast<std::uint64_t>(i))));
    }
    return lists;
  };
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

struct PointSummary {
  double p = 0;
  metrics::MechanismKind kind;
  metrics::ScenarioReport report;
};

struct SweepOutput {
  std::vector<PointSummary> points;
  std::vector<std::string> files;
};

namespace detail {

inline SweepOutput run_grid(const std::string& command, const RunConfig& cfg,
                            const std::vector<double>& p_grid,
                            const std::vector<metrics::MechanismKind>& kinds,
                            const metrics::ListsFactory& lists, bool interference) {
  cfg.scenario.validate();
  if (cfg.trials < 1) throw ConfigError("trials must be at least 1");
  std::filesystem::create_directories(cfg.out);

  metrics::EvalOptions opt;
  opt.records = cfg.records;
  opt.pmw_expected_updates = cfg.expected_updates;
  opt.scr_gamma = cfg.gamma;
  opt.scr_lambda = cfg.lambda;
  opt.jobs = cfg.jobs;
  opt.interference = interference;
  opt.lists_factory = lists;

  SweepOutput out;
  std::string raw_path = cfg.out + "/" + command + "_raw.csv";
  std::ofstream raw(raw_path);
  raw << kRawHeader << '\n';
  std::vector<SummaryRow> summary;

  for (double p : p_grid) {
    ScenarioConfig sc = cfg.scenario;
    sc.p = p;
    for (auto kind : kinds) {
      auto report = metrics::evaluate_scenario(sc, kind, cfg.trials, opt);
      write_raw_rows(raw, metrics::to_string(kind), p, sc.epsilon, sc.alpha, report.rows);
      summarize_point(summary, p, metrics::to_string(kind), sc.k, cfg.trials, report,
                      interference);
      out.points.push_back({p, kind, std::move(report)});
    }
  }
  raw.close();

  std::string summary_path = cfg.out + "/" + command + "_summary.csv";
  write_summary(summary_path, summary);
  std::string meta_path = cfg.out + "/run_meta.txt";
  write_meta(meta_path, command, cfg, {"queries_per_analyst: " + std::to_string(cfg.queries_per_analyst)});
  out.files = {raw_path, summary_path, meta_path};
  return out;
}

}  // namespace detail

// Two analysts, identical query shapes on disjoint halves, PMW and the
// split-Laplace baseline across an arrival-skew grid.
inline SweepOutput cmd_motivate(const RunConfig& cfg) {
  long qpa = cfg.queries_per_analyst > 0 ? cfg.queries_per_analyst : 75;
  if (cfg.scenario.k != 2) throw ConfigError("motivate is a two-analyst experiment");
  if (cfg.scenario.d < 2) throw ConfigError("motivate needs d >= 2");
  return detail::run_grid("motivate", cfg, {0.5, 0.6, 0.7, 0.8, 0.9, 1.0},
                          {metrics::MechanismKind::pmw, metrics::MechanismKind::laplace_split},
                          detail::mirrored_halves(cfg.scenario.d, qpa), false);
}

// The full mechanism pool over a heterogeneous analyst population.
inline SweepOutput cmd_sweep(const RunConfig& cfg) {
  long qpa = cfg.queries_per_analyst > 0 ? cfg.queries_per_analyst : 40;
  return detail::run_grid(
      "sweep", cfg, {0.01, 0.1, 0.9},
      {metrics::MechanismKind::independent_pmw, metrics::MechanismKind::pmw,
       metrics::MechanismKind::scr, metrics::MechanismKind::round_robin_pmw,
       metrics::MechanismKind::randomized_pmw},
      detail::mixed_pool(cfg.scenario.k, cfg.scenario.d, qpa), true);
}

// ---------------------------------------------------------------------------
// Adversarial demonstration

struct AdversarialCell {
  std::string sequence;   // "q" or "q_prime"
  std::string mechanism;  // "greedy_laplace" or "scr"
  std::vector<double> mean_joint;
  std::vector<double> mean_independent;
  double max_ratio_error = 0;
};

struct AdversarialOutput {
  workloads::AdversarialSequences sequences;
  std::vector<AdversarialCell> cells;
  bool pass = false;
  std::vector<std::string> files;
};

namespace detail {

// Count-scale utility against the adversarial threshold.
inline long count_utility(const std::vector<double>& released, const std::vector<double>& truth,
                          double alpha) {
  long n = 0;
  for (std::size_t i = 0; i < released.size(); ++i)
    if (std::abs(released[i] - truth[i]) < alpha) ++n;
  return n;
}

struct AdversarialRun {
  std::vector<double> joint_u;  // per analyst
  std::vector<double> ind_u;
};

inline AdversarialRun adversarial_trial(const std::string& mechanism, const QuerySequence& seq,
                                        const ScenarioConfig& cfg, const RunConfig& run,
                                        const DataVector& x, std::uint64_t seed) {
  int k = cfg.k;
  double alpha = cfg.alpha;  // count scale
  auto shares_of = [&](std::vector<int> ids) {
    std::map<AnalystId, double> m;
    for (int i : ids) m[i] = cfg.shares[static_cast<std::size_t>(i)];
    return m;
  };
  auto make = [&](std::map<AnalystId, double> shares, std::size_t seq_size,
                  std::uint64_t s) -> std::unique_ptr<mech::Mechanism> {
    double eps = 0;
    for (auto& [id, v] : shares) eps += v;
    if (mechanism == "greedy_laplace") {
      long total = std::max<long>(
          1, std::min<long>(static_cast<long>(seq_size), workloads::query_limit(alpha, eps, 1)));
      return std::make_unique<mech::LaplaceSplit>(x, total, eps, mech::make_stream_noise(s));
    }
    mech::ScrParams params;
    params.gamma = run.gamma;
    params.lambda = run.lambda;
    params.alpha_count = alpha;
    return std::make_unique<mech::Scr>(x, shares, params, mech::make_stream_noise(s));
  };

  AdversarialRun out;
  out.joint_u.assign(static_cast<std::size_t>(k), 0.0);
  out.ind_u.assign(static_cast<std::size_t>(k), 0.0);

  std::vector<int> all;
  for (int i = 0; i < k; ++i) all.push_back(i);
  auto joint = make(shares_of(all), seq.size(), derive_seed(seed, 0));
  std::vector<std::vector<double>> released(static_cast<std::size_t>(k)),
      truth(static_cast<std::size_t>(k));
  for (const auto& item : seq) {
    auto ans = joint->answer(item.query, item.analyst);
    released[static_cast<std::size_t>(item.analyst)].push_back(ans.value);
    truth[static_cast<std::size_t>(item.analyst)].push_back(x.true_count(item.query));
  }
  for (int i = 0; i < k; ++i)
    out.joint_u[static_cast<std::size_t>(i)] = static_cast<double>(
        count_utility(released[static_cast<std::size_t>(i)], truth[static_cast<std::size_t>(i)], alpha));

  for (int i = 0; i < k; ++i) {
    QuerySequence own;
    for (const auto& item : seq)
      if (item.analyst == i) own.push_back(item);
    auto solo = make(shares_of({i}), own.size(), derive_seed(seed, 0x100 + static_cast<std::uint64_t>(i)));
    std::vector<double> rel, tru;
    for (const auto& item : own) {
      rel.push_back(solo->answer(item.query, item.analyst).value);
      tru.push_back(x.true_count(item.query));
    }
    out.ind_u[static_cast<std::size_t>(i)] = static_cast<double>(count_utility(rel, tru, alpha));
  }
  return out;
}

}  // namespace detail

// Runs the lower-bound construction: a greedy pooled baseline must starve
// later analysts on the fresh-query sequence, while the per-share cache
// mechanism must not.
inline AdversarialOutput cmd_adversarial(const RunConfig& cfg) {
  cfg.scenario.validate();
  if (cfg.trials < 1) throw ConfigError("trials must be at least 1");
  std::filesystem::create_directories(cfg.out);

  AdversarialOutput out;
  try {
    out.sequences = workloads::adversarial_sequences(cfg.scenario.alpha, cfg.scenario.epsilon,
                                                     cfg.scenario.k, cfg.scenario.d,
                                                     derive_seed(cfg.scenario.seed, 0xadf));
  } catch (const NoFeasibleD& e) {
    throw ConfigError(std::string(e.what()) +
                      " (need c with k^2 c^3 < (alpha*epsilon)^2 <= k^2 d^3 and d >= 2k; "
                      "raise alpha*epsilon or d, or lower k)");
  }

  const std::vector<std::pair<std::string, const QuerySequence*>> sequences = {
      {"q", &out.sequences.q}, {"q_prime", &out.sequences.q_prime}};
  const std::vector<std::string> mechanisms = {"greedy_laplace", "scr"};
  int k = cfg.scenario.k;

  std::string raw_q = cfg.out + "/adversarial_q.csv";
  std::string raw_qp = cfg.out + "/adversarial_q_prime.csv";
  std::map<std::string, std::ofstream> raw;
  raw["q"].open(raw_q);
  raw["q_prime"].open(raw_qp);
  for (auto& [label, stream] : raw) stream << kRawHeader << '\n';

  double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& [label, seq] : sequences) {
    for (const auto& mechanism : mechanisms) {
      AdversarialCell cell;
      cell.sequence = label;
      cell.mechanism = mechanism;
      cell.mean_joint.assign(static_cast<std::size_t>(k), 0.0);
      cell.mean_independent.assign(static_cast<std::size_t>(k), 0.0);
      std::vector<metrics::TrialRow> rows;
      for (long t = 0; t < cfg.trials; ++t) {
        std::uint64_t trial_seed = derive_seed(cfg.scenario.seed, static_cast<std::uint64_t>(t));
        DataVector x = workloads::synthetic_data(cfg.scenario.d, cfg.records,
                                                 derive_seed(trial_seed, 0xda7a));
        auto run = detail::adversarial_trial(mechanism, *seq, cfg.scenario, cfg, x,
                                             derive_seed(trial_seed, mechanism == "scr" ? 2 : 1));
        for (int i = 0; i < k; ++i) {
          metrics::TrialRow row;
          row.trial = t;
          row.analyst = i;
          row.utility_joint = run.joint_u[static_cast<std::size_t>(i)];
          row.utility_independent = run.ind_u[static_cast<std::size_t>(i)];
          row.ratio = metrics::ratio_or_sentinel(row.utility_independent, row.utility_joint);
          row.interference = nan;
          row.time_steps = static_cast<long>(seq->size());
          row.stall_count = 0;
          rows.push_back(row);
          cell.mean_joint[static_cast<std::size_t>(i)] += row.utility_joint;
          cell.mean_independent[static_cast<std::size_t>(i)] += row.utility_independent;
        }
      }
      for (int i = 0; i < k; ++i) {
        cell.mean_joint[static_cast<std::size_t>(i)] /= static_cast<double>(cfg.trials);
        cell.mean_independent[static_cast<std::size_t>(i)] /= static_cast<double>(cfg.trials);
      }
      cell.max_ratio_error = metrics::max_ratio_error(cell.mean_independent, cell.mean_joint);
      write_raw_rows(raw[label], mechanism, nan, cfg.scenario.epsilon, cfg.scenario.alpha, rows);
      out.cells.push_back(std::move(cell));
    }
  }
  for (auto& [label, stream] : raw) stream.close();

  std::string q_path = cfg.out + "/sequence_q.txt";
  std::string qp_path = cfg.out + "/sequence_q_prime.txt";
  {
    std::ofstream qs(q_path);
    workloads::write_sequence(out.sequences.q, qs);
    std::ofstream qps(qp_path);
    workloads::write_sequence(out.sequences.q_prime, qps);
  }

  auto cell_of = [&](const std::string& seq_label, const std::string& mech_label) {
    for (const auto& c : out.cells)
      if (c.sequence == seq_label && c.mechanism == mech_label) return c;
    throw std::logic_error("missing cell");
  };
  double greedy_mre = cell_of("q_prime", "greedy_laplace").max_ratio_error;
  double scr_mre = cell_of("q_prime", "scr").max_ratio_error;
  out.pass = greedy_mre > 1.0 && scr_mre <= 1.1;

  std::string verdict_path = cfg.out + "/verdict.txt";
  {
    std::ofstream v(verdict_path);
    double product = cfg.scenario.alpha * cfg.scenario.epsilon;
    v << "construction: alpha=" << fmt(cfg.scenario.alpha) << " (count scale), epsilon="
      << fmt(cfg.scenario.epsilon) << ", k=" << k << ", d=" << cfg.scenario.d << '\n';
    v << "d_big=" << out.sequences.d_big << " (largest c with c^3 < (alpha*epsilon)^2="
      << fmt(product * product) << ")\n";
    v << "d_small=" << out.sequences.d_small << " (largest c with k^2 c^3 < (alpha*epsilon)^2)\n";
    v << "|Q|=" << out.sequences.q.size() << " |Q'|=" << out.sequences.q_prime.size() << '\n';
    for (const auto& c : out.cells) {
      v << c.mechanism << " on " << c.sequence << ": max_ratio_error=" << fmt(c.max_ratio_error)
        << " joint=(";
      for (int i = 0; i < k; ++i) v << (i ? " " : "") << fmt(c.mean_joint[static_cast<std::size_t>(i)]);
      v << ") independent=(";
      for (int i = 0; i < k; ++i) v << (i ? " " : "") << fmt(c.mean_independent[static_cast<std::size_t>(i)]);
      v << ")\n";
    }
    v << "greedy_laplace on q_prime violates sharing incentive: "
      << (greedy_mre > 1.0 ? "yes" : "no") << " (max_ratio_error=" << fmt(greedy_mre) << ")\n";
    v << "scr on q_prime preserves sharing incentive: " << (scr_mre <= 1.1 ? "yes" : "no")
      << " (max_ratio_error=" << fmt(scr_mre) << ")\n";
    v << (out.pass ? "PASS" : "FAIL") << '\n';
  }
  write_meta(cfg.out + "/run_meta.txt", "adversarial", cfg, {});
  out.files = {raw_q, raw_qp, q_path, qp_path, verdict_path, cfg.out + "/run_meta.txt"};
  return out;
}

// ---------------------------------------------------------------------------
// Coupon tables

struct CouponRow {
  long k = 0;
  long m = 0;
  double exact = 0;
  double mc_mean = 0;
  double mc_stderr = 0;
  double asymptotic = 0;        // NaN below the formula's domain
  double nonuniform_bound = 0;  // equals asymptotic for uniform weights
};

struct CouponOutput {
  std::vector<CouponRow> rows;
  std::vector<std::string> files;
};

inline CouponOutput cmd_coupon(const RunConfig& cfg) {
  if (cfg.trials < 1) throw ConfigError("trials must be at least 1");
  auto ks = detail::parse_count_list("k_list", cfg.k_list);
  auto ms = detail::parse_count_list("m_list", cfg.m_list);
  for (long k : ks)
    if (k < 1) throw ConfigError("k_list entries must be positive");
  for (long m : ms)
    if (m < 1) throw ConfigError("m_list entries must be positive");
  std::filesystem::create_directories(cfg.out);

  CouponOutput out;
  double nan = std::numeric_limits<double>::quiet_NaN();
  for (long k : ks) {
    for (long m : ms) {
      auto spec = coupon::CouponSpec::uniform(static_cast<int>(k), static_cast<int>(m));
      CouponRow row;
      row.k = k;
      row.m = m;
      row.exact = coupon::expected_draws(spec);
      auto mc = coupon::monte_carlo_draws(
          spec, cfg.trials,
          derive_seed(cfg.scenario.seed, static_cast<std::uint64_t>(k * 1000 + m)));
      row.mc_mean = mc.mean;
      row.mc_stderr = mc.stderr_of_mean;
      try {
        row.asymptotic = coupon::uniform_closed_form(static_cast<int>(k), static_cast<int>(m));
        row.nonuniform_bound = coupon::nonuniform_upper_bound(spec);
      } catch (const DomainTooSmall&) {
        row.asymptotic = nan;
        row.nonuniform_bound = nan;
      }
      out.rows.push_back(row);
    }
  }

  std::string path = cfg.out + "/coupon.csv";
  std::ofstream csv(path);
  csv << "k,m,exact,mc_mean,mc_stderr,asymptotic,nonuniform_bound\n";
  for (const auto& r : out.rows)
    csv << r.k << ',' << r.m << ',' << fmt(r.exact) << ',' << fmt(r.mc_mean) << ','
        << fmt(r.mc_stderr) << ',' << fmt(r.asymptotic) << ',' << fmt(r.nonuniform_bound)
        << '\n';
  csv.close();
  write_meta(cfg.out + "/run_meta.txt", "coupon", cfg,
             {"k_list: " + cfg.k_list, "m_list: " + cfg.m_list});
  out.files = {path, cfg.out + "/run_meta.txt"};
  return out;
}

}  // namespace madp::experiments
