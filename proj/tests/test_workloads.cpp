#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "madp/workloads.hpp"

using madp::InvalidSubset;
using madp::LinearQuery;
using madp::NoFeasibleD;
using madp::QuerySequence;
using madp::workloads::Subset;
using madp::workloads::WorkloadKind;

TEST_CASE("synthetic data is a normalized deterministic histogram", "[workloads]") {
  auto one = madp::workloads::synthetic_data(1, 50, 3);
  REQUIRE(one.mass == std::vector<double>{1.0});

  auto a = madp::workloads::synthetic_data(86, 10000, 7);
  auto b = madp::workloads::synthetic_data(86, 10000, 7);
  REQUIRE(a.mass == b.mass);

  auto c = madp::workloads::synthetic_data(4, 100, 9);
  double sum = 0;
  for (double m : c.mass) {
    REQUIRE(m >= 0);
    sum += m;
  }
  REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("identity and prefix workloads", "[workloads]") {
  auto ident = madp::workloads::workload(WorkloadKind::identity, 3, 0, {}, 0);
  REQUIRE(ident.size() == 3);
  CHECK(ident[0].coef == std::vector<double>{1, 0, 0});
  CHECK(ident[1].coef == std::vector<double>{0, 1, 0});
  CHECK(ident[2].coef == std::vector<double>{0, 0, 1});

  auto prefix = madp::workloads::workload(WorkloadKind::prefix, 3, 0, {}, 0);
  REQUIRE(prefix.size() == 3);
  CHECK(prefix[0].coef == std::vector<double>{1, 0, 0});
  CHECK(prefix[1].coef == std::vector<double>{1, 1, 0});
  CHECK(prefix[2].coef == std::vector<double>{1, 1, 1});
}

TEST_CASE("hierarchical workload enumerates the interval tree", "[workloads]") {
  auto tree = madp::workloads::workload(WorkloadKind::hierarchical, 4, 0, {}, 0);
  REQUIRE(tree.size() == 7);
  CHECK(tree[0].coef == std::vector<double>{1, 1, 1, 1});
  CHECK(tree[1].coef == std::vector<double>{1, 1, 0, 0});
  CHECK(tree[2].coef == std::vector<double>{0, 0, 1, 1});
  std::set<std::vector<double>> leaves(
      {tree[3].coef, tree[4].coef, tree[5].coef, tree[6].coef});
  std::set<std::vector<double>> expected{
      {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
  CHECK(leaves == expected);

  // Unbalanced domains still produce 2d - 1 interval nodes.
  auto odd = madp::workloads::workload(WorkloadKind::hierarchical, 5, 0, {}, 0);
  CHECK(odd.size() == 9);
}

TEST_CASE("subsets restrict support and invalid ranges are rejected", "[workloads]") {
  auto sub = madp::workloads::workload(WorkloadKind::identity, 6, 0, {2, 4}, 0);
  REQUIRE(sub.size() == 2);
  CHECK(sub[0].coef == std::vector<double>{0, 0, 1, 0, 0, 0});
  CHECK(sub[1].coef == std::vector<double>{0, 0, 0, 1, 0, 0});

  auto ranged = madp::workloads::workload(WorkloadKind::random_range, 8, 20, {3, 7}, 5);
  REQUIRE(ranged.size() == 20);
  for (const auto& q : ranged) {
    CHECK(q.sensitivity() <= 1.0);
    for (int j = 0; j < 8; ++j)
      if (j < 3 || j >= 7) CHECK(q.coef[static_cast<std::size_t>(j)] == 0.0);
  }

  CHECK_THROWS_AS(madp::workloads::workload(WorkloadKind::identity, 4, 0, {2, 2}, 0),
                  InvalidSubset);
  CHECK_THROWS_AS(madp::workloads::workload(WorkloadKind::identity, 4, 0, {1, 5}, 0),
                  InvalidSubset);
}

TEST_CASE("deterministic kinds cycle to the requested size", "[workloads]") {
  auto cycled = madp::workloads::workload(WorkloadKind::identity, 3, 7, {}, 0);
  REQUIRE(cycled.size() == 7);
  CHECK(cycled[3].coef == cycled[0].coef);
  CHECK(cycled[6].coef == cycled[0].coef);
}

TEST_CASE("interleave at p=1 answers analyst 0 first", "[workloads]") {
  std::vector<std::vector<LinearQuery>> lists{
      {LinearQuery({1, 0}), LinearQuery({0, 1}), LinearQuery({1, 1})},
      {LinearQuery({1, -1}), LinearQuery({0.5, 0})}};
  auto seq = madp::workloads::interleave(lists, 1.0, 42);
  REQUIRE(seq.size() == 5);
  for (int i = 0; i < 3; ++i) CHECK(seq[static_cast<std::size_t>(i)].analyst == 0);
  for (int i = 3; i < 5; ++i) CHECK(seq[static_cast<std::size_t>(i)].analyst == 1);
  CHECK(seq[3].query.coef == lists[1][0].coef);
  CHECK(seq[4].query.coef == lists[1][1].coef);
}

TEST_CASE("interleave with one analyst returns the list unchanged", "[workloads]") {
  std::vector<std::vector<LinearQuery>> lists{{LinearQuery({1}), LinearQuery({0.5})}};
  auto seq = madp::workloads::interleave(lists, 0.3, 1);
  REQUIRE(seq.size() == 2);
  CHECK(seq[0].query.coef == lists[0][0].coef);
  CHECK(seq[1].query.coef == lists[0][1].coef);
}

TEST_CASE("interleave sampling law is unbiased at p=0.5", "[workloads][property]") {
  const int steps = 10000;
  std::vector<std::vector<LinearQuery>> lists(
      2, std::vector<LinearQuery>(steps / 2, LinearQuery({1.0})));
  double fraction_sum = 0;
  for (int seed = 0; seed < 100; ++seed) {
    auto seq = madp::workloads::interleave(lists, 0.5, static_cast<std::uint64_t>(seed));
    int zero_count = 0;
    for (int t = 0; t < steps / 2; ++t)
      if (seq[static_cast<std::size_t>(t)].analyst == 0) ++zero_count;
    fraction_sum += static_cast<double>(zero_count) / (steps / 2);
  }
  CHECK(std::abs(fraction_sum / 100 - 0.5) < 0.02);
}

TEST_CASE("interleave preserves per-analyst order", "[workloads][property]") {
  madp::Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    int k = 1 + static_cast<int>(rng.uniform_int(0, 5));
    std::vector<std::vector<LinearQuery>> lists(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      long len = rng.uniform_int(0, 12);
      for (long j = 0; j < len; ++j)
        lists[static_cast<std::size_t>(i)].push_back(
            LinearQuery({static_cast<double>(i), static_cast<double>(j)}));
    }
    bool any = false;
    for (const auto& l : lists) any = any || !l.empty();
    if (!any) lists[0].push_back(LinearQuery({0, 0}));

    double p = rng.uniform01();
    auto seq = madp::workloads::interleave(lists, p, rng.next_u64());
    std::vector<std::size_t> next(static_cast<std::size_t>(k), 0);
    for (const auto& item : seq) {
      auto i = static_cast<std::size_t>(item.analyst);
      REQUIRE(item.query.coef == lists[i][next[i]].coef);
      ++next[i];
    }
    for (int i = 0; i < k; ++i)
      REQUIRE(next[static_cast<std::size_t>(i)] == lists[static_cast<std::size_t>(i)].size());
  }
}

TEST_CASE("query limit", "[workloads]") {
  CHECK(madp::workloads::query_limit(1000, 1, 10) == 21);
  CHECK(madp::workloads::query_limit(1, 1, 1) == 1);
  CHECK(madp::workloads::query_limit(1000, 1, 1) == 100);
}

TEST_CASE("adversarial sequences match the hardness construction", "[workloads]") {
  auto adv = madp::workloads::adversarial_sequences(1000, 1, 2, 86, 11);
  CHECK(adv.d_big == 99);
  CHECK(adv.d_small == 62);
  REQUIRE(adv.q.size() == static_cast<std::size_t>(99 + 62));
  REQUIRE(adv.q_prime.size() == static_cast<std::size_t>(99 + 62));
  REQUIRE(adv.q_double_prime.size() == static_cast<std::size_t>(99 + 1));

  for (std::size_t t = 0; t < 99; ++t) {
    CHECK(adv.q[t].analyst == 0);
    CHECK(adv.q[t].query == adv.q_prime[t].query);
    CHECK(adv.q[t].query == adv.q_double_prime[t].query);
  }
  // In Q the second analyst repeats the first d_small prefix queries.
  for (std::size_t j = 0; j < 62; ++j) {
    CHECK(adv.q[99 + j].analyst == 1);
    CHECK(adv.q[99 + j].query == adv.q[j].query);
  }
  // In Q' supports are disjoint across analysts.
  for (std::size_t t = 99; t < adv.q_prime.size(); ++t) {
    REQUIRE(adv.q_prime[t].analyst == 1);
    for (int j = 0; j < 43; ++j)
      CHECK(adv.q_prime[t].query.coef[static_cast<std::size_t>(j)] == 0.0);
  }
  for (const auto& item : adv.q_prime) CHECK(item.query.sensitivity() <= 1.0);
}

TEST_CASE("adversarial construction surfaces infeasibility", "[workloads]") {
  CHECK_THROWS_AS(madp::workloads::adversarial_sequences(0.5, 1, 2, 8, 0), NoFeasibleD);
}

TEST_CASE("sequence serialization round-trips", "[workloads]") {
  auto adv = madp::workloads::adversarial_sequences(200, 1, 2, 12, 3);
  std::ostringstream os;
  madp::workloads::write_sequence(adv.q, os);
  std::istringstream is(os.str());
  auto back = madp::workloads::read_sequence(is);
  REQUIRE(back.size() == adv.q.size());
  for (std::size_t t = 0; t < back.size(); ++t) {
    CHECK(back[t].analyst == adv.q[t].analyst);
    CHECK(back[t].query == adv.q[t].query);
  }

  // Q and Q' serialize to identical prefix lines.
  std::ostringstream oq, oqp;
  madp::workloads::write_sequence(adv.q, oq);
  madp::workloads::write_sequence(adv.q_prime, oqp);
  std::string line_q, line_qp;
  std::istringstream iq(oq.str()), iqp(oqp.str());
  for (long t = 0; t < adv.d_big; ++t) {
    std::getline(iq, line_q);
    std::getline(iqp, line_qp);
    REQUIRE(line_q == line_qp);
  }
}
