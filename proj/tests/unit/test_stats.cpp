#include <doctest.h>

#include <rfsvm/stats.hpp>

#include <nlohmann/json.hpp>

#include "oracles.hpp"

#include <cmath>
#include <numeric>

using namespace rfsvm;

namespace {

ScoreTable table_of(std::initializer_list<std::initializer_list<double>> rows) {
  ScoreTable t;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto k = static_cast<Eigen::Index>(rows.begin()->size());
  t.scores.resize(n, k);
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) t.scores(i, j++) = v;
    ++i;
  }
  for (Eigen::Index j = 0; j < k; ++j) t.methods.push_back("m" + std::to_string(j));
  for (Eigen::Index d = 0; d < n; ++d) t.datasets.push_back("d" + std::to_string(d));
  return t;
}

ScoreTable random_table(Index n, Index k, Seed seed) {
  Rng rng(seed);
  ScoreTable t;
  t.scores.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < t.scores.rows(); ++i)
    for (Eigen::Index j = 0; j < t.scores.cols(); ++j)
      t.scores(i, j) = std::round(100.0 * (0.5 + 0.5 * rng.uniform())) / 100.0;  // coarse, so ties happen
  for (Index j = 0; j < k; ++j) t.methods.push_back("m" + std::to_string(j));
  for (Index d = 0; d < n; ++d) t.datasets.push_back("d" + std::to_string(d));
  return t;
}

// Rank by counting: 1 + #better + (#equal others)/2.
double counted_rank(const ScoreTable& t, Eigen::Index d, Eigen::Index j) {
  double r = 1.0;
  for (Eigen::Index o = 0; o < t.scores.cols(); ++o) {
    if (o == j) continue;
    if (t.scores(d, o) > t.scores(d, j)) r += 1.0;
    else if (t.scores(d, o) == t.scores(d, j)) r += 0.5;
  }
  return r;
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("rank examples") {
    const auto t = table_of({{0.9, 0.8, 0.7}, {0.9, 0.9, 0.7}});
    const auto r = rank_methods(t);
    CHECK(r.ranks(0, 0) == 1.0);
    CHECK(r.ranks(0, 1) == 2.0);
    CHECK(r.ranks(0, 2) == 3.0);
    CHECK(r.ranks(1, 0) == 1.5);
    CHECK(r.ranks(1, 1) == 1.5);
    CHECK(r.ranks(1, 2) == 3.0);
    CHECK(r.avg_ranks[0] == doctest::Approx(1.25));
    CHECK(r.avg_ranks[2] == doctest::Approx(3.0));
  }

  TEST_CASE("ranks match the counting oracle and rows sum to k(k+1)/2") {
    for (Seed s = 0; s < 50; ++s) {
      const Index k = 2 + s % 9;
      const auto t = random_table(3 + s % 7, k, s);
      const auto r = rank_methods(t);
      const double kk = static_cast<double>(k);
      double total = 0.0;
      for (Eigen::Index d = 0; d < r.ranks.rows(); ++d) {
        CHECK(r.ranks.row(d).sum() == doctest::Approx(kk * (kk + 1.0) / 2.0));
        for (Eigen::Index j = 0; j < r.ranks.cols(); ++j)
          CHECK(r.ranks(d, j) == counted_rank(t, d, j));
      }
      for (double a : r.avg_ranks) {
        CHECK(a >= 1.0);
        CHECK(a <= kk);
        total += a;
      }
      CHECK(total == doctest::Approx(kk * (kk + 1.0) / 2.0));
    }
  }

  TEST_CASE("nemenyi constants agree with the studentized range oracle") {
    for (Index k = 2; k <= 10; ++k)
      for (double alpha : {0.05, 0.10})
        CHECK(nemenyi_q(k, alpha) == doctest::Approx(oracle::nemenyi_constant(static_cast<int>(k), alpha)).epsilon(1e-5));
    CHECK(nemenyi_q(2, 0.05) == doctest::Approx(1.959964).epsilon(1e-6));
    CHECK_THROWS_AS(nemenyi_q(1, 0.05), Error);
    CHECK_THROWS_AS(nemenyi_q(11, 0.05), Error);
    CHECK_THROWS_AS(nemenyi_q(5, 0.01), Error);
  }

  TEST_CASE("critical difference for seven methods on forty datasets") {
    const double cd = critical_difference(7, 40, 0.05);
    const double expected = oracle::nemenyi_constant(7, 0.05) * std::sqrt(7.0 * 8.0 / 240.0);
    CHECK(cd == doctest::Approx(expected).epsilon(1e-5));
    CHECK(std::abs(cd - 1.425) <= 0.01);
    CHECK_THROWS_AS(critical_difference(7, 0, 0.05), Error);
  }

  TEST_CASE("friedman on identical scores") {
    ScoreTable t = random_table(6, 5, 1);
    for (Eigen::Index d = 0; d < t.scores.rows(); ++d) t.scores.row(d).setConstant(0.8);
    const auto f = friedman_nemenyi(t);
    CHECK(f.statistic == 0.0);
    CHECK(f.p_value == 1.0);
    for (double a : f.avg_ranks) CHECK(a == 3.0);
    REQUIRE(f.groups.size() == 1);
    CHECK(f.groups[0].size() == 5);
  }

  TEST_CASE("one method best everywhere") {
    ScoreTable t = random_table(12, 4, 2);
    for (Eigen::Index d = 0; d < t.scores.rows(); ++d) t.scores(d, 2) = 1.5;
    const auto f = friedman_nemenyi(t);
    CHECK(f.avg_ranks[2] == 1.0);
    CHECK(f.statistic > 0.0);
  }

  TEST_CASE("friedman statistic and p-value against the closed form") {
    for (Seed s = 0; s < 20; ++s) {
      const auto t = random_table(5 + s, 3, 40 + s);
      const auto f = friedman_nemenyi(t);
      const double n = static_cast<double>(t.n());
      // Sum of squared rank totals, from counted ranks.
      double rsq = 0.0;
      for (Eigen::Index j = 0; j < 3; ++j) {
        double rj = 0.0;
        for (Eigen::Index d = 0; d < t.scores.rows(); ++d) rj += counted_rank(t, d, j);
        rsq += rj * rj;
      }
      const double chi2 = 12.0 / (n * 3.0 * 4.0) * rsq - 3.0 * n * 4.0;
      CHECK(f.statistic == doctest::Approx(std::max(chi2, 0.0)).epsilon(1e-9));
      // Two degrees of freedom: survival function exp(-x/2).
      CHECK(f.p_value == doctest::Approx(std::exp(-f.statistic / 2.0)).epsilon(1e-9));
      const double id = (n - 1.0) * f.statistic / (n * 2.0 - f.statistic);
      if (n * 2.0 - f.statistic > 0.0) CHECK(f.iman_davenport == doctest::Approx(id));
    }
  }

  TEST_CASE("friedman is invariant under monotone transforms of a row") {
    for (Seed s = 0; s < 20; ++s) {
      const auto t = random_table(8, 5, 70 + s);
      auto u = t;
      for (Eigen::Index d = 0; d < u.scores.rows(); ++d)
        for (Eigen::Index j = 0; j < u.scores.cols(); ++j)
          u.scores(d, j) = d % 2 ? std::exp(3.0 * t.scores(d, j)) : 2.0 * t.scores(d, j) - 7.0;
      const auto a = friedman_nemenyi(t);
      const auto b = friedman_nemenyi(u);
      CHECK(a.statistic == b.statistic);
      CHECK(a.avg_ranks == b.avg_ranks);
      CHECK(a.groups == b.groups);
    }
  }

  TEST_CASE("groups are runs narrower than the critical difference") {
    for (Seed s = 0; s < 20; ++s) {
      const auto t = random_table(10, 6, 200 + s);
      const auto f = friedman_nemenyi(t);
      std::vector<bool> seen(6, false);
      for (const auto& g : f.groups) {
        double lo = 1e9, hi = -1e9;
        for (Index j : g) {
          lo = std::min(lo, f.avg_ranks[j]);
          hi = std::max(hi, f.avg_ranks[j]);
          seen[j] = true;
        }
        CHECK(hi - lo < f.cd);
      }
      for (bool b : seen) CHECK(b);
    }
  }

  TEST_CASE("score table validation") {
    CHECK_THROWS_AS(friedman_nemenyi(table_of({{0.9, 0.8}, {0.7, 0.6}})), Error);
    CHECK_THROWS_AS(rank_methods(table_of({{0.9, 0.8, 0.7}})), Error);
    auto t = table_of({{0.9, 0.8, 0.7}, {0.7, 0.6, 0.5}});
    t.scores(1, 1) = std::nan("");
    CHECK_THROWS_AS(rank_methods(t), Error);
    t.methods.pop_back();
    CHECK_THROWS_AS(t.validate(), Error);
  }

  TEST_CASE("bayesian sign test: one side dominates") {
    std::vector<double> a(30, 0.9), b(30, 0.8);
    const auto r = bayesian_sign_test(a, b, 0.01, 50000, 3);
    CHECK(r.counts == std::array<Index, 3>{30, 0, 0});
    CHECK(r.p_a_gt_b >= 0.99);
    // Dirichlet(30, 1, 0): component 0 wins whenever it exceeds one half,
    // i.e. with probability 1 - 2^-30.
    CHECK(r.p_a_gt_b == doctest::Approx(1.0 - std::pow(0.5, 30.0)).epsilon(1e-4));
  }

  TEST_CASE("bayesian sign test: identical vectors") {
    Rng rng(5);
    std::vector<double> a(25);
    for (auto& v : a) v = rng.uniform();
    for (double rope : {0.001, 0.005, 0.01, 0.1}) {
      const auto r = bayesian_sign_test(a, a, rope, 50000, 9);
      CHECK(r.p_rope >= 0.99);
      CHECK(r.p_a_gt_b + r.p_rope + r.p_b_gt_a == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("bayesian sign test: argument swap") {
    for (Seed s = 0; s < 5; ++s) {
      Rng rng(s);
      std::vector<double> a(20), b(20);
      for (Index i = 0; i < 20; ++i) {
        a[i] = rng.uniform();
        b[i] = a[i] + 0.03 * (rng.uniform() - 0.4);
      }
      const auto ab = bayesian_sign_test(a, b, 0.005, 50000, 11);
      const auto ba = bayesian_sign_test(b, a, 0.005, 50000, 12);
      CHECK(std::abs(ab.p_a_gt_b - ba.p_b_gt_a) <= 0.01);
      CHECK(std::abs(ab.p_b_gt_a - ba.p_a_gt_b) <= 0.01);
      CHECK(std::abs(ab.p_rope - ba.p_rope) <= 0.01);
    }
  }

  TEST_CASE("bayesian sign test is reproducible and sums to one") {
    const std::vector<double> a{0.9, 0.8, 0.85, 0.7, 0.6}, b{0.88, 0.82, 0.85, 0.65, 0.605};
    const auto r1 = bayesian_sign_test(a, b, 0.01, 20000, 77, true);
    const auto r2 = bayesian_sign_test(a, b, 0.01, 20000, 77, true);
    CHECK(r1.p_a_gt_b == r2.p_a_gt_b);
    CHECK(r1.p_rope == r2.p_rope);
    CHECK(r1.draws == r2.draws);
    CHECK(r1.p_a_gt_b + r1.p_rope + r1.p_b_gt_a == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r1.counts == std::array<Index, 3>{2, 2, 1});
    // Draw means approach the Dirichlet(2, 3, 1) mean.
    std::array<double, 3> mean{};
    for (const auto& d : r1.draws) {
      CHECK(d[0] + d[1] + d[2] == doctest::Approx(1.0));
      for (int c = 0; c < 3; ++c) mean[c] += d[c] / static_cast<double>(r1.draws.size());
    }
    CHECK(mean[0] == doctest::Approx(2.0 / 6.0).epsilon(0.02));
    CHECK(mean[1] == doctest::Approx(3.0 / 6.0).epsilon(0.02));
    CHECK(mean[2] == doctest::Approx(1.0 / 6.0).epsilon(0.03));
    CHECK(bayesian_sign_test(a, b, 0.01, 2000, 1).p_a_gt_b != bayesian_sign_test(a, b, 0.01, 2000, 2).p_a_gt_b);
  }

  TEST_CASE("bayesian win probability against a beta oracle") {
    // Counts (n, 0, 0) with the rope prior give Dirichlet(n, 1, 0); the first
    // component is largest iff it exceeds one half: P = 1 - 2^-n.
    for (Index n : {1, 2, 3}) {
      std::vector<double> a(n, 1.0), b(n, 0.0);
      const auto r = bayesian_sign_test(a, b, 0.01, 50000, 21);
      CHECK(std::abs(r.p_a_gt_b - (1.0 - std::pow(0.5, static_cast<double>(n)))) <= 0.01);
    }
  }

  TEST_CASE("wider rope does not raise the decisive mass") {
    // Paired test over 100 random score tables, 95% one-sided.
    std::vector<double> diffs;
    for (Seed s = 0; s < 100; ++s) {
      Rng rng(1000 + s);
      std::vector<double> a(40), b(40);
      for (Index i = 0; i < 40; ++i) {
        a[i] = rng.uniform();
        b[i] = a[i] + 0.03 * (rng.uniform() - 0.5);
      }
      const auto narrow = bayesian_sign_test(a, b, 0.005, 4000, s);
      const auto wide = bayesian_sign_test(a, b, 0.01, 4000, s);
      diffs.push_back((narrow.p_a_gt_b + narrow.p_b_gt_a) - (wide.p_a_gt_b + wide.p_b_gt_a));
    }
    const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / 100.0;
    double var = 0.0;
    for (double d : diffs) var += (d - mean) * (d - mean) / 99.0;
    CHECK(mean >= -1.645 * std::sqrt(var / 100.0));
  }

  TEST_CASE("bayesian sign test errors") {
    CHECK_THROWS_AS(bayesian_sign_test({1.0, 2.0}, {1.0}, 0.01), Error);
    CHECK_THROWS_AS(bayesian_sign_test({1.0}, {1.0}, -0.01), Error);
    CHECK_THROWS_AS(bayesian_sign_test({1.0}, {1.0}, 0.01, 0), Error);
  }

  TEST_CASE("cd diagram json") {
    const auto t = table_of({{0.9, 0.8, 0.7}, {0.95, 0.85, 0.6}, {0.9, 0.7, 0.8}});
    const auto f = friedman_nemenyi(t);
    const auto j = nlohmann::json::parse(cd_diagram_json(t, f));
    CHECK(j["cd"].get<double>() == doctest::Approx(f.cd));
    REQUIRE(j["methods"].size() == 3);
    CHECK(j["methods"][0]["method"] == "m0");
    CHECK(j["methods"][0]["avg_rank"].get<double>() == doctest::Approx(1.0));
    CHECK(j["groups"].size() == f.groups.size());
    CHECK(j["datasets"].get<Index>() == 3);
  }
}
