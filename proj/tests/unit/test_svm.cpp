#include <doctest.h>

#include <rfsvm/svm.hpp>

#include "oracles.hpp"
#include "synthetic.hpp"

#include <numeric>

using namespace rfsvm;

namespace {

struct Problem {
  Eigen::MatrixXd k;
  std::vector<int> y;
};

// Random p.s.d. kernel of random rank with both labels present.
Problem random_problem(Index n, Seed seed) {
  Rng rng(seed);
  const Index rank = 1 + rng.below(n);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rank));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = testing::normal(rng);
  Problem p{a * a.transpose(), std::vector<int>(n)};
  for (auto& v : p.y) v = rng.below(2) ? 1 : -1;
  p.y[0] = 1;
  p.y[1] = -1;
  return p;
}

double margin(const BinarySvmModel& m, const Eigen::MatrixXd& k, Index i) {
  std::vector<double> row(static_cast<Index>(k.cols()));
  for (Index j = 0; j < row.size(); ++j) row[j] = k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return decision_value(m, row);
}

void check_feasible_kkt(const BinarySvmModel& m, const Problem& p, double c, double tol) {
  const auto alpha = m.alphas();
  double balance = 0.0;
  for (Index i = 0; i < alpha.size(); ++i) {
    CHECK(alpha[i] >= 0.0);
    CHECK(alpha[i] <= c);
    balance += alpha[i] * p.y[i];
    const double yf = p.y[i] * margin(m, p.k, i);
    if (alpha[i] <= 0.0) CHECK(yf >= 1.0 - tol);
    else if (alpha[i] >= c) CHECK(yf <= 1.0 + tol);
    else CHECK(std::abs(yf - 1.0) <= tol);
  }
  CHECK(std::abs(balance) <= 1e-6 * c * static_cast<double>(alpha.size()));
  for (Index i = 0; i < alpha.size(); ++i) {
    const bool listed = std::find(m.support_indices.begin(), m.support_indices.end(), i) != m.support_indices.end();
    CHECK(listed == (alpha[i] > 0.0));
  }
}

BinarySvmModel bias_only(double bias, std::pair<int, int> pair) {
  BinarySvmModel m;
  m.bias = bias;
  m.label_pair = pair;
  m.converged = true;
  return m;
}

}  // namespace

TEST_SUITE("svm") {
  TEST_CASE("two points with an identity kernel") {
    const Eigen::MatrixXd k = Eigen::MatrixXd::Identity(2, 2);
    const std::vector<int> y{1, -1};
    const auto m = solve_binary_smo(k, y, SvmHyperparams{.c = 10.0});
    CHECK(m.converged);
    const auto alpha = m.alphas();
    CHECK(alpha[0] == doctest::Approx(1.0));
    CHECK(alpha[1] == doctest::Approx(1.0));
    CHECK(m.bias == doctest::Approx(0.0));
    CHECK(m.objective == doctest::Approx(1.0));
    CHECK(dual_objective(k, y, alpha) == doctest::Approx(1.0));
    const std::vector<double> row{1.0, 0.0};
    CHECK(decision_value(m, row) == doctest::Approx(1.0));
  }

  TEST_CASE("six-point problems match both oracles") {
    for (Seed s = 0; s < 20; ++s) {
      const auto p = random_problem(6, s);
      const auto m = solve_binary_smo(p.k, p.y, SvmHyperparams{.c = 1.0}, s);
      const auto exact = oracle::enumerate_dual(p.k, p.y, 1.0);
      const auto ref = oracle::projected_gradient_dual(p.k, p.y, 1.0);
      CHECK(m.converged);
      CHECK(ref.stationarity < 1e-7);
      CHECK(std::abs(exact.objective - ref.objective) <= 1e-6);
      CHECK(std::abs(m.objective - exact.objective) <= 1e-6);
      check_feasible_kkt(m, p, 1.0, 1e-3);
    }
  }

  TEST_CASE("enumeration oracle on the two-point example") {
    const std::vector<int> y{1, -1};
    const auto exact = oracle::enumerate_dual(Eigen::MatrixXd::Identity(2, 2), y, 10.0);
    CHECK(exact.objective == doctest::Approx(1.0));
    CHECK(exact.alpha(0) == doctest::Approx(1.0));
    const auto capped = oracle::enumerate_dual(Eigen::MatrixXd::Identity(2, 2), y, 0.5);
    CHECK(capped.objective == doctest::Approx(0.75));
  }

  TEST_CASE("feasibility and kkt across C") {
    for (Seed s = 0; s < 30; ++s) {
      const double c = std::pow(10.0, static_cast<double>(s % 7) - 2.0);
      const auto p = random_problem(3 + s % 20, 100 + s);
      const auto m = solve_binary_smo(p.k, p.y, SvmHyperparams{.c = c}, s);
      CHECK(m.converged);
      check_feasible_kkt(m, p, c, 1e-3);
      CHECK(m.objective == doctest::Approx(dual_objective(p.k, p.y, m.alphas())));
    }
  }

  TEST_CASE("solver is deterministic") {
    const auto p = random_problem(15, 3);
    const auto a = solve_binary_smo(p.k, p.y, SvmHyperparams{.c = 10.0}, 1);
    const auto b = solve_binary_smo(p.k, p.y, SvmHyperparams{.c = 10.0}, 1);
    CHECK(a.dual_coefs == b.dual_coefs);
    CHECK(a.bias == b.bias);
    CHECK(a.iterations == b.iterations);
  }

  TEST_CASE("non-convergence is flagged, not thrown") {
    const auto p = random_problem(30, 8);
    const auto m = solve_binary_smo(p.k, p.y, SvmHyperparams{.c = 100.0, .kkt_tolerance = 1e-3, .max_passes = 1}, 0);
    if (!m.converged) CHECK(m.max_violation >= 1e-3);
    for (double a : m.alphas()) CHECK((a >= 0.0 && a <= 100.0));
  }

  TEST_CASE("solver errors") {
    const std::vector<int> y{1, -1};
    CHECK_THROWS_AS(solve_binary_smo(Eigen::MatrixXd::Identity(2, 3), y, {}), Error);
    const std::vector<int> same{1, 1};
    CHECK_THROWS_AS(solve_binary_smo(Eigen::MatrixXd::Identity(2, 2), same, {}), Error);
    const std::vector<int> three{1, -1, 1};
    CHECK_THROWS_AS(solve_binary_smo(Eigen::MatrixXd::Identity(2, 2), three, {}), Error);
    CHECK_THROWS_AS(solve_binary_smo(Eigen::MatrixXd::Identity(2, 2), y, SvmHyperparams{.c = 0.0}), Error);
    const std::vector<int> not_sign{2, -1};
    CHECK_THROWS_AS(solve_binary_smo(Eigen::MatrixXd::Identity(2, 2), not_sign, {}), Error);
  }

  TEST_CASE("decision value") {
    const auto m = bias_only(0.3, {0, 1});
    CHECK(decision_value(m, std::vector<double>{}) == 0.3);
    CHECK_THROWS_AS(decision_value(m, std::vector<double>{1.0}), Error);
  }

  TEST_CASE("free support vectors sit on the margin") {
    const auto p = random_problem(12, 21);
    const auto m = solve_binary_smo(p.k, p.y, SvmHyperparams{.c = 1.0}, 0);
    const auto alpha = m.alphas();
    for (Index i = 0; i < alpha.size(); ++i)
      if (alpha[i] > 1e-9 && alpha[i] < 1.0 - 1e-9) CHECK(std::abs(margin(m, p.k, i) - p.y[i]) <= 1e-3);
  }

  TEST_CASE("one-vs-one model counts") {
    const auto d2 = testing::make_blobs(5, 2, 3, 1.0, 1);
    const auto d10 = testing::make_blobs(3, 10, 12, 0.5, 2);
    IndexList all2(d2.n()), all10(d10.n());
    std::iota(all2.begin(), all2.end(), Index{0});
    std::iota(all10.begin(), all10.end(), Index{0});
    const auto m2 = fit_multiclass(rbf_kernel(d2, all2, all2, 0.1), d2.labels(), {});
    const auto m10 = fit_multiclass(rbf_kernel(d10, all10, all10, 0.1), d10.labels(), {});
    CHECK(m2.binary_models.size() == 1);
    CHECK(m10.binary_models.size() == 45);
    CHECK(m10.classes == 10);
    CHECK(m10.converged());
    const auto predicted = predict(m10, rbf_kernel(d10, all10, all10, 0.1));
    CHECK(predicted == d10.labels());
  }

  TEST_CASE("binary sub-problems see the restricted kernel") {
    const auto d = testing::make_blobs(4, 3, 5, 1.0, 3);
    IndexList all(d.n());
    std::iota(all.begin(), all.end(), Index{0});
    const auto k = rbf_kernel(d, all, all, 0.2).values;
    const auto model = fit_multiclass(k, d.labels(), SvmHyperparams{.c = 10.0}, 4);
    for (const auto& b : model.binary_models) {
      const auto sub = select_submatrix(k, b.columns);
      for (Index i = 0; i < b.columns.size(); ++i)
        for (Index j = 0; j < b.columns.size(); ++j)
          CHECK(sub(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
                k(static_cast<Eigen::Index>(b.columns[i]), static_cast<Eigen::Index>(b.columns[j])));
      std::vector<int> signs;
      for (Index col : b.columns) signs.push_back(d.label(col) == b.label_pair.first ? 1 : -1);
      const auto direct = solve_binary_smo(sub, signs, SvmHyperparams{.c = 10.0}, 0);
      CHECK(std::abs(direct.objective - b.objective) <= 1e-6);
    }
  }

  TEST_CASE("binary prediction follows the sign") {
    SvmModel model;
    model.classes = 2;
    model.train_size = 0;
    model.binary_models.push_back(bias_only(-0.5, {0, 1}));
    CHECK(predict(model, Eigen::MatrixXd(3, 0)) == std::vector<int>{1, 1, 1});
    model.binary_models[0].bias = 0.5;
    CHECK(predict(model, Eigen::MatrixXd(1, 0)) == std::vector<int>{0});
  }

  TEST_CASE("unanimous and cyclic votes") {
    SvmModel model;
    model.classes = 4;
    model.train_size = 0;
    // Class 3 beats everyone.
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) model.binary_models.push_back(bias_only(b == 3 ? -1.0 : 1.0, {a, b}));
    CHECK(predict(model, Eigen::MatrixXd(1, 0)) == std::vector<int>{3});

    // 0 beats 1 by 0.2, 1 beats 2 by 0.9, 2 beats 0 by 0.4: one vote each,
    // class 1 has the largest summed margin.
    SvmModel cyclic;
    cyclic.classes = 3;
    cyclic.train_size = 0;
    cyclic.binary_models = {bias_only(0.2, {0, 1}), bias_only(0.9, {1, 2}), bias_only(-0.4, {0, 2})};
    CHECK(predict(cyclic, Eigen::MatrixXd(1, 0)) == std::vector<int>{1});
    cyclic.binary_models[1].bias = 0.2;
    cyclic.binary_models[2].bias = -0.2;
    CHECK(predict(cyclic, Eigen::MatrixXd(1, 0)) == std::vector<int>{0});
    CHECK_THROWS_AS(predict(cyclic, Eigen::MatrixXd(1, 2)), Error);
  }

  TEST_CASE("classes missing from the training labels") {
    Eigen::MatrixXd k = Eigen::MatrixXd::Identity(4, 4);
    const std::vector<int> labels{0, 2, 0, 2};
    const auto m = fit_multiclass(k, labels, {});
    CHECK(m.binary_models.size() == 1);
    for (int p : predict(m, k)) CHECK(p != 1);
    const std::vector<int> single{1, 1, 1, 1};
    const auto constant = fit_multiclass(k, single, {});
    CHECK(constant.constant_class == 1);
    CHECK(predict(constant, k) == std::vector<int>{1, 1, 1, 1});
  }

  TEST_CASE("svm json round trip") {
    const auto d = testing::make_blobs(6, 3, 4, 1.0, 5);
    IndexList all(d.n());
    std::iota(all.begin(), all.end(), Index{0});
    const auto k = rbf_kernel(d, all, all, 0.3);
    const auto m = fit_multiclass(k, d.labels(), SvmHyperparams{.c = 2.0}, 1);
    const auto back = svm_from_json(svm_to_json(m));
    CHECK(svm_to_json(back) == svm_to_json(m));
    CHECK(predict(back, k) == predict(m, k));
  }
}
