#pragma once

#include <Eigen/Core>

#include <array>
#include <string>
#include <vector>

#include "rfsvm/common.hpp"

namespace rfsvm {

/// Mean accuracies of k methods on N datasets; scores(dataset, method).
struct ScoreTable {
  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  Eigen::MatrixXd scores;

  Index k() const noexcept { return methods.size(); }
  Index n() const noexcept { return datasets.size(); }

  /// Throws Error unless the shape is consistent, k >= 2, N >= 2 and every
  /// cell is finite.
  void validate() const;
};

struct Ranking {
  Eigen::MatrixXd ranks;           // N x k, rank 1 = best, mid-ranks on ties
  std::vector<double> avg_ranks;   // k
};

Ranking rank_methods(const ScoreTable& t);

struct FriedmanReport {
  std::vector<double> avg_ranks;
  double statistic = 0.0;        // chi-square, k - 1 degrees of freedom
  double p_value = 1.0;
  double iman_davenport = 0.0;   // F, (k - 1) and (k - 1)(N - 1) degrees of freedom
  double iman_davenport_p = 1.0;
  double alpha = 0.05;
  double q_alpha = 0.0;
  double cd = 0.0;
  /// Maximal runs of methods (by ascending average rank) whose spread is
  /// below the critical difference. Entries are method indices.
  std::vector<std::vector<Index>> groups;
};

/// Two-tailed Nemenyi constant (studentized range quantile over sqrt 2, infinite
/// degrees of freedom) for k in [2, 10] and alpha in {0.05, 0.10}.
double nemenyi_q(Index k, double alpha);

/// q_alpha * sqrt(k (k + 1) / (6 N)).
double critical_difference(Index k, Index n_datasets, double alpha);

/// Friedman test with the Nemenyi post-hoc critical difference. Needs k >= 3.
FriedmanReport friedman_nemenyi(const ScoreTable& t, double alpha = 0.05);

struct BayesReport {
  double p_a_gt_b = 0.0;
  double p_rope = 0.0;
  double p_b_gt_a = 0.0;
  double rope = 0.0;
  Index samples = 0;
  std::array<Index, 3> counts{};  // (a > b, rope, b > a) observation counts
  std::vector<std::array<double, 3>> draws;  // kept only when requested
};

/// Bayesian sign test with a Dirichlet prior of strength 1 on the rope cell.
/// Differences a - b are counted as right (> rope), rope (|z| <= rope) or
/// left (< -rope); probability triples are drawn from
/// Dirichlet(right, rope + 1, left) and each probability reports how often
/// that component was the largest (ties split evenly).
BayesReport bayesian_sign_test(const std::vector<double>& a_scores,
                               const std::vector<double>& b_scores, double rope,
                               Index samples = 50000, Seed seed = 0, bool keep_draws = false);

/// Critical-difference diagram data: methods with average ranks and groups.
std::string cd_diagram_json(const ScoreTable& t, const FriedmanReport& report);

}  // namespace rfsvm
