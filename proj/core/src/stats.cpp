#include "rfsvm/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rfsvm {

void ScoreTable::validate() const {
  if (k() < 2) throw Error("score table needs at least two methods");
  if (n() < 2) throw Error("score table needs at least two datasets");
  if (static_cast<Index>(scores.rows()) != n() || static_cast<Index>(scores.cols()) != k())
    throw Error("score table shape does not match its labels");
  if (!scores.allFinite()) throw Error("score table has missing cells");
}

Ranking rank_methods(const ScoreTable& t) {
  t.validate();
  const Index k = t.k();
  Ranking out;
  out.ranks.resize(static_cast<Eigen::Index>(t.n()), static_cast<Eigen::Index>(k));
  IndexList order(k);
  for (Index d = 0; d < t.n(); ++d) {
    const auto row = t.scores.row(static_cast<Eigen::Index>(d));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return row(static_cast<Eigen::Index>(a)) > row(static_cast<Eigen::Index>(b));
    });
    for (Index start = 0; start < k;) {
      Index end = start + 1;
      while (end < k && row(static_cast<Eigen::Index>(order[end])) ==
                            row(static_cast<Eigen::Index>(order[start])))
        ++end;
      // Positions start..end-1 hold rank values start+1..end.
      const double mid = (static_cast<double>(start + 1) + static_cast<double>(end)) / 2.0;
      for (Index p = start; p < end; ++p)
        out.ranks(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(order[p])) = mid;
      start = end;
    }
  }
  out.avg_ranks.resize(k);
  for (Index j = 0; j < k; ++j)
    out.avg_ranks[j] = out.ranks.col(static_cast<Eigen::Index>(j)).mean();
  return out;
}

double nemenyi_q(Index k, double alpha) {
  // Studentized range quantiles for infinite degrees of freedom divided by
  // sqrt(2), computed to 6 decimals and cross-checked against the Nemenyi
  // tables in the classifier-comparison literature (which round to 3).
  static constexpr double q05[] = {1.959964, 2.343701, 2.569032, 2.727774, 2.849705,
                                   2.948320, 3.030878, 3.101730, 3.163684};
  static constexpr double q10[] = {1.644854, 2.052293, 2.291341, 2.459516, 2.588521,
                                   2.692732, 2.779884, 2.854606, 2.919889};
  if (k < 2 || k > 10) throw Error("nemenyi_q: k must lie in [2, 10]");
  if (std::abs(alpha - 0.05) < 1e-12) return q05[k - 2];
  if (std::abs(alpha - 0.10) < 1e-12) return q10[k - 2];
  throw Error("nemenyi_q: alpha must be 0.05 or 0.10");
}

double critical_difference(Index k, Index n_datasets, double alpha) {
  if (n_datasets == 0) throw Error("critical_difference: no datasets");
  const double kk = static_cast<double>(k);
  return nemenyi_q(k, alpha) * std::sqrt(kk * (kk + 1.0) / (6.0 * static_cast<double>(n_datasets)));
}

FriedmanReport friedman_nemenyi(const ScoreTable& t, double alpha) {
  t.validate();
  if (t.k() < 3) throw Error("friedman test needs at least three methods");
  const auto ranking = rank_methods(t);
  const double k = static_cast<double>(t.k());
  const double n = static_cast<double>(t.n());

  FriedmanReport report;
  report.avg_ranks = ranking.avg_ranks;
  report.alpha = alpha;

  double sum_sq = 0.0;
  for (double r : report.avg_ranks) sum_sq += r * r;
  report.statistic =
      std::max(0.0, 12.0 * n / (k * (k + 1.0)) * (sum_sq - k * (k + 1.0) * (k + 1.0) / 4.0));
  // Rounding can leave a tiny positive residue on identical rankings.
  if (report.statistic < 1e-12) report.statistic = 0.0;

  const boost::math::chi_squared chi2(k - 1.0);
  report.p_value = report.statistic == 0.0 ? 1.0 : boost::math::cdf(complement(chi2, report.statistic));

  const double denom = n * (k - 1.0) - report.statistic;
  if (denom > 0.0) {
    report.iman_davenport = (n - 1.0) * report.statistic / denom;
    const boost::math::fisher_f f(k - 1.0, (k - 1.0) * (n - 1.0));
    report.iman_davenport_p =
        report.iman_davenport == 0.0 ? 1.0 : boost::math::cdf(complement(f, report.iman_davenport));
  } else {
    report.iman_davenport = std::numeric_limits<double>::infinity();
    report.iman_davenport_p = 0.0;
  }

  report.q_alpha = nemenyi_q(t.k(), alpha);
  report.cd = critical_difference(t.k(), t.n(), alpha);

  IndexList order(t.k());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return report.avg_ranks[a] < report.avg_ranks[b];
  });
  Index covered_until = 0;  // exclusive end of the last emitted run
  for (Index start = 0; start < order.size(); ++start) {
    Index end = start + 1;
    while (end < order.size() &&
           report.avg_ranks[order[end]] - report.avg_ranks[order[start]] < report.cd)
      ++end;
    if (end > covered_until) {
      report.groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
      covered_until = end;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

BayesReport bayesian_sign_test(const std::vector<double>& a_scores,
                               const std::vector<double>& b_scores, double rope, Index samples,
                               Seed seed, bool keep_draws) {
  if (a_scores.size() != b_scores.size())
    throw Error("bayesian_sign_test: score vectors differ in length");
  if (!(rope >= 0.0)) throw Error("bayesian_sign_test: rope must be non-negative");
  if (samples == 0) throw Error("bayesian_sign_test: need at least one sample");

  BayesReport report;
  report.rope = rope;
  report.samples = samples;
  for (Index i = 0; i < a_scores.size(); ++i) {
    const double z = a_scores[i] - b_scores[i];
    if (z > rope) ++report.counts[0];
    else if (z < -rope) ++report.counts[2];
    else ++report.counts[1];
  }

  const std::array<double, 3> concentration{static_cast<double>(report.counts[0]),
                                            static_cast<double>(report.counts[1]) + 1.0,
                                            static_cast<double>(report.counts[2])};
  Rng rng(seed);
  std::array<double, 3> wins{};
  if (keep_draws) report.draws.reserve(samples);
  for (Index s = 0; s < samples; ++s) {
    std::array<double, 3> g{};
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
      if (concentration[c] > 0.0) {
        boost::random::gamma_distribution<double> gamma(concentration[c]);
        g[c] = gamma(rng);
      }
      total += g[c];
    }
    for (auto& v : g) v /= total;
    const double top = std::max({g[0], g[1], g[2]});
    const int ties = static_cast<int>(std::count(g.begin(), g.end(), top));
    for (int c = 0; c < 3; ++c)
      if (g[c] == top) wins[c] += 1.0 / ties;
    if (keep_draws) report.draws.push_back(g);
  }

  const double total = static_cast<double>(samples);
  report.p_a_gt_b = wins[0] / total;
  report.p_rope = wins[1] / total;
  report.p_b_gt_a = wins[2] / total;
  return report;
}

std::string cd_diagram_json(const ScoreTable& t, const FriedmanReport& report) {
  nlohmann::json out;
  out["cd"] = report.cd;
  out["alpha"] = report.alpha;
  out["datasets"] = t.n();
  out["statistic"] = report.statistic;
  out["p_value"] = report.p_value;
  auto& methods = out["methods"] = nlohmann::json::array();
  for (Index j = 0; j < t.k(); ++j) {
    std::vector<Index> member_of;
    for (Index g = 0; g < report.groups.size(); ++g)
      if (std::find(report.groups[g].begin(), report.groups[g].end(), j) != report.groups[g].end())
        member_of.push_back(g);
    methods.push_back(
        {{"method", t.methods[j]}, {"avg_rank", report.avg_ranks[j]}, {"groups", member_of}});
  }
  auto& groups = out["groups"] = nlohmann::json::array();
  for (const auto& g : report.groups) {
    std::vector<std::string> names;
    for (Index j : g) names.push_back(t.methods[j]);
    groups.push_back(names);
  }
  return out.dump(2);
}

}  // namespace rfsvm
