#include "rfsvm/svm.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rfsvm {

std::vector<double> BinarySvmModel::alphas() const {
  std::vector<double> out(dual_coefs.size());
  std::transform(dual_coefs.begin(), dual_coefs.end(), out.begin(),
                 [](double v) { return std::abs(v); });
  return out;
}

double dual_objective(const Eigen::MatrixXd& kernel, std::span<const int> signs,
                      std::span<const double> alpha) {
  const Index n = alpha.size();
  double linear = 0.0;
  double quadratic = 0.0;
  for (Index i = 0; i < n; ++i) {
    linear += alpha[i];
    for (Index j = 0; j < n; ++j) {
      quadratic += alpha[i] * alpha[j] * signs[i] * signs[j] *
                   kernel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  return linear - 0.5 * quadratic;
}

namespace {

constexpr double kTau = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Dual problem in LIBSVM form: minimize 1/2 a'Qa - e'a with Q_ij = y_i y_j K_ij,
// 0 <= a <= C, y'a = 0. grad_ = Qa - e.
class SmoSolver {
 public:
  SmoSolver(const Eigen::MatrixXd& kernel, std::span<const int> signs, const SvmHyperparams& hp,
            Seed seed)
      : k_(kernel),
        y_(signs.begin(), signs.end()),
        c_(hp.c),
        eps_(hp.kkt_tolerance),
        n_(signs.size()),
        alpha_(n_, 0.0),
        grad_(n_, -1.0),
        rng_(seed) {
    const Index passes = hp.max_passes > 0 ? hp.max_passes : 10 * n_;
    // Floor keeps tiny problems from being cut short by an n^2 budget.
    max_iterations_ = std::max<Index>(passes * n_, 100000);
  }

  BinarySvmModel solve() {
    BinarySvmModel model;
    Index iteration = 0;
    bool converged = false;
    while (iteration < max_iterations_) {
      Index i = 0, j = 0;
      if (!select_pair(i, j)) {
        converged = true;
        break;
      }
      ++iteration;
      if (!update(i, j) && !fallback_sweep()) break;
    }
    if (!converged) {
      Index i = 0, j = 0;
      converged = !select_pair(i, j);
    }

    model.converged = converged;
    model.iterations = iteration;
    model.max_violation = std::max(0.0, violation_);
    model.bias = bias();
    model.dual_coefs.resize(n_);
    double objective = 0.0;
    for (Index t = 0; t < n_; ++t) {
      model.dual_coefs[t] = alpha_[t] * y_[t];
      if (alpha_[t] > 0.0) model.support_indices.push_back(t);
      objective += alpha_[t] * (1.0 - grad_[t]);
    }
    model.objective = objective / 2.0;
    model.columns.resize(n_);
    std::iota(model.columns.begin(), model.columns.end(), 0);
    return model;
  }

 private:
  double k(Index a, Index b) const {
    return k_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  bool at_upper(Index t) const { return alpha_[t] >= c_; }
  bool at_lower(Index t) const { return alpha_[t] <= 0.0; }
  bool in_up(Index t) const { return y_[t] > 0 ? !at_upper(t) : !at_lower(t); }
  bool in_low(Index t) const { return y_[t] > 0 ? !at_lower(t) : !at_upper(t); }

  // Returns false when the KKT pair violation is below tolerance.
  bool select_pair(Index& out_i, Index& out_j) {
    double gmax = -kInf;
    Index best_i = n_;
    for (Index t = 0; t < n_; ++t) {
      if (!in_up(t)) continue;
      const double v = -y_[t] * grad_[t];
      if (v >= gmax) {
        gmax = v;
        best_i = t;
      }
    }

    double gmax2 = -kInf;
    double best_gain = kInf;
    Index best_j = n_;
    for (Index t = 0; t < n_; ++t) {
      if (!in_low(t)) continue;
      const double v = y_[t] * grad_[t];
      gmax2 = std::max(gmax2, v);
      if (best_i == n_) continue;
      const double grad_diff = gmax + v;
      if (grad_diff <= 0.0) continue;
      // Curvature along the feasible direction; the label signs cancel.
      double quad = k(best_i, best_i) + k(t, t) - 2.0 * k(best_i, t);
      if (quad <= 0.0) quad = kTau;
      const double gain = -(grad_diff * grad_diff) / quad;
      if (gain <= best_gain) {
        best_gain = gain;
        best_j = t;
      }
    }

    violation_ = gmax + gmax2;
    if (best_i == n_ || best_j == n_ || violation_ < eps_) return false;
    out_i = best_i;
    out_j = best_j;
    return true;
  }

  // Analytic two-variable step. Returns false if neither multiplier moved.
  bool update(Index i, Index j) {
    const double old_i = alpha_[i];
    const double old_j = alpha_[j];
    const double kij = k(i, j);

    double quad = k(i, i) + k(j, j) - 2.0 * kij;
    if (quad <= 0.0) quad = kTau;
    if (y_[i] != y_[j]) {
      const double delta = (-grad_[i] - grad_[j]) / quad;
      const double diff = alpha_[i] - alpha_[j];
      alpha_[i] += delta;
      alpha_[j] += delta;
      if (diff > 0.0) {
        if (alpha_[j] < 0.0) { alpha_[j] = 0.0; alpha_[i] = diff; }
      } else if (alpha_[i] < 0.0) {
        alpha_[i] = 0.0;
        alpha_[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha_[i] > c_) { alpha_[i] = c_; alpha_[j] = c_ - diff; }
      } else if (alpha_[j] > c_) {
        alpha_[j] = c_;
        alpha_[i] = c_ + diff;
      }
    } else {
      const double delta = (grad_[i] - grad_[j]) / quad;
      const double sum = alpha_[i] + alpha_[j];
      alpha_[i] -= delta;
      alpha_[j] += delta;
      if (sum > c_) {
        if (alpha_[i] > c_) { alpha_[i] = c_; alpha_[j] = sum - c_; }
      } else if (alpha_[j] < 0.0) {
        alpha_[j] = 0.0;
        alpha_[i] = sum;
      }
      if (sum > c_) {
        if (alpha_[j] > c_) { alpha_[j] = c_; alpha_[i] = sum - c_; }
      } else if (alpha_[i] < 0.0) {
        alpha_[i] = 0.0;
        alpha_[j] = sum;
      }
    }

    const double d_i = alpha_[i] - old_i;
    const double d_j = alpha_[j] - old_j;
    if (d_i == 0.0 && d_j == 0.0) return false;
    for (Index t = 0; t < n_; ++t)
      grad_[t] += y_[t] * (y_[i] * k(t, i) * d_i + y_[j] * k(t, j) * d_j);
    return true;
  }

  // Tries every violating pair in a seeded order; false if none moves.
  bool fallback_sweep() {
    IndexList order(n_);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng_);
    for (Index i : order) {
      if (!in_up(i)) continue;
      for (Index j : order) {
        if (i == j || !in_low(j)) continue;
        if (-y_[i] * grad_[i] + y_[j] * grad_[j] < eps_) continue;
        if (update(i, j)) return true;
      }
    }
    return false;
  }

  double bias() const {
    double upper = kInf;
    double lower = -kInf;
    double free_sum = 0.0;
    Index free_count = 0;
    for (Index t = 0; t < n_; ++t) {
      const double yg = y_[t] * grad_[t];
      if (at_upper(t)) {
        if (y_[t] < 0) upper = std::min(upper, yg); else lower = std::max(lower, yg);
      } else if (at_lower(t)) {
        if (y_[t] > 0) upper = std::min(upper, yg); else lower = std::max(lower, yg);
      } else {
        ++free_count;
        free_sum += yg;
      }
    }
    const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count)
                                      : (upper + lower) / 2.0;
    return -rho;
  }

  const Eigen::MatrixXd& k_;
  std::vector<int> y_;
  double c_;
  double eps_;
  Index n_;
  std::vector<double> alpha_;
  std::vector<double> grad_;
  Rng rng_;
  Index max_iterations_ = 0;
  double violation_ = 0.0;
};

}  // namespace

BinarySvmModel solve_binary_smo(const Eigen::MatrixXd& kernel, std::span<const int> signs,
                                const SvmHyperparams& hp, Seed seed) {
  if (kernel.rows() != kernel.cols()) throw Error("smo: kernel is not square");
  if (static_cast<Index>(kernel.rows()) != signs.size())
    throw Error("smo: kernel and label vector differ in size");
  if (!(hp.c > 0.0)) throw Error("smo: C must be positive");
  if (!(hp.kkt_tolerance > 0.0)) throw Error("smo: kkt tolerance must be positive");
  bool has_pos = false;
  bool has_neg = false;
  for (int s : signs) {
    if (s == 1) has_pos = true;
    else if (s == -1) has_neg = true;
    else throw Error("smo: labels must be +1 or -1");
  }
  if (!has_pos || !has_neg) throw Error("smo: labels contain a single class");
  return SmoSolver(kernel, signs, hp, seed).solve();
}

BinarySvmModel solve_binary_smo(const KernelMatrix& kernel, std::span<const int> signs,
                                const SvmHyperparams& hp, Seed seed) {
  return solve_binary_smo(kernel.values, signs, hp, seed);
}

double decision_value(const BinarySvmModel& model, std::span<const double> kernel_row) {
  if (kernel_row.size() != model.dual_coefs.size())
    throw Error("decision_value: kernel row length does not match the training size");
  double sum = model.bias;
  for (Index i = 0; i < kernel_row.size(); ++i) sum += model.dual_coefs[i] * kernel_row[i];
  return sum;
}

// ---------------------------------------------------------------------------

bool SvmModel::converged() const {
  return std::all_of(binary_models.begin(), binary_models.end(),
                     [](const auto& m) { return m.converged; });
}

Eigen::MatrixXd select_submatrix(const Eigen::MatrixXd& kernel, std::span<const Index> ids) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      out(a, b) = kernel(static_cast<Eigen::Index>(ids[static_cast<Index>(a)]),
                         static_cast<Eigen::Index>(ids[static_cast<Index>(b)]));
  return out;
}

SvmModel fit_multiclass(const Eigen::MatrixXd& kernel, std::span<const int> labels,
                        const SvmHyperparams& hp, Seed seed) {
  if (kernel.rows() != kernel.cols()) throw Error("fit_multiclass: kernel is not square");
  if (static_cast<Index>(kernel.rows()) != labels.size())
    throw Error("fit_multiclass: kernel and labels differ in size");
  if (labels.empty()) throw Error("fit_multiclass: empty training set");

  SvmModel model;
  model.train_size = labels.size();
  const int top = *std::max_element(labels.begin(), labels.end());
  if (*std::min_element(labels.begin(), labels.end()) < 0)
    throw Error("fit_multiclass: negative class id");
  model.classes = static_cast<Index>(top) + 1;

  std::vector<IndexList> members(model.classes);
  for (Index i = 0; i < labels.size(); ++i) members[static_cast<Index>(labels[i])].push_back(i);
  std::vector<int> present;
  for (Index cls = 0; cls < model.classes; ++cls)
    if (!members[cls].empty()) present.push_back(static_cast<int>(cls));
  if (present.size() == 1) {
    model.constant_class = present.front();
    return model;
  }

  std::vector<std::pair<int, int>> pairs;
  for (Index a = 0; a < present.size(); ++a)
    for (Index b = a + 1; b < present.size(); ++b) pairs.emplace_back(present[a], present[b]);

  model.binary_models.resize(pairs.size());
  parallel_for(pairs.size(), [&](Index p) {
    const auto [pos, neg] = pairs[p];
    IndexList ids;
    std::vector<int> signs;
    for (Index i = 0; i < labels.size(); ++i) {
      if (labels[i] == pos || labels[i] == neg) {
        ids.push_back(i);
        signs.push_back(labels[i] == pos ? 1 : -1);
      }
    }
    auto binary = solve_binary_smo(select_submatrix(kernel, ids), signs, hp, derive_seed(seed, p));
    binary.label_pair = {pos, neg};
    binary.columns = std::move(ids);
    model.binary_models[p] = std::move(binary);
  });
  return model;
}

SvmModel fit_multiclass(const KernelMatrix& kernel, std::span<const int> labels,
                        const SvmHyperparams& hp, Seed seed) {
  return fit_multiclass(kernel.values, labels, hp, seed);
}

std::vector<int> predict(const SvmModel& model, const Eigen::MatrixXd& kernel_rows) {
  if (static_cast<Index>(kernel_rows.cols()) != model.train_size)
    throw Error("predict: kernel columns do not align with the training set");
  std::vector<int> out(static_cast<Index>(kernel_rows.rows()));
  if (model.constant_class >= 0) {
    std::fill(out.begin(), out.end(), model.constant_class);
    return out;
  }

  std::vector<Index> votes(model.classes);
  std::vector<double> strength(model.classes);
  std::vector<double> row;
  for (Eigen::Index r = 0; r < kernel_rows.rows(); ++r) {
    std::fill(votes.begin(), votes.end(), 0);
    std::fill(strength.begin(), strength.end(), 0.0);
    for (const auto& binary : model.binary_models) {
      row.resize(binary.columns.size());
      for (Index t = 0; t < row.size(); ++t)
        row[t] = kernel_rows(r, static_cast<Eigen::Index>(binary.columns[t]));
      const double value = decision_value(binary, row);
      const auto winner = static_cast<Index>(value > 0.0 ? binary.label_pair.first
                                                         : binary.label_pair.second);
      ++votes[winner];
      strength[winner] += std::abs(value);
    }
    Index best = 0;
    for (Index cls = 1; cls < model.classes; ++cls) {
      if (votes[cls] > votes[best] ||
          (votes[cls] == votes[best] && strength[cls] > strength[best]))
        best = cls;
    }
    out[static_cast<Index>(r)] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const SvmModel& model, const KernelMatrix& kernel_rows) {
  return predict(model, kernel_rows.values);
}

// ---------------------------------------------------------------------------

std::string svm_to_json(const SvmModel& model) {
  nlohmann::json out;
  out["format"] = "rfsvm-svm";
  out["version"] = 1;
  out["classes"] = model.classes;
  out["train_size"] = model.train_size;
  out["constant_class"] = model.constant_class;
  auto& list = out["binary_models"] = nlohmann::json::array();
  for (const auto& b : model.binary_models) {
    list.push_back({{"label_pair", {b.label_pair.first, b.label_pair.second}},
                    {"dual_coefs", b.dual_coefs},
                    {"bias", b.bias},
                    {"support_indices", b.support_indices},
                    {"columns", b.columns},
                    {"converged", b.converged},
                    {"iterations", b.iterations},
                    {"objective", b.objective},
                    {"max_violation", b.max_violation}});
  }
  return out.dump();
}

SvmModel svm_from_json(const std::string& text) {
  try {
    const auto in = nlohmann::json::parse(text);
    if (in.at("format") != "rfsvm-svm") throw Error("not an svm model file");
    SvmModel model;
    model.classes = in.at("classes").get<Index>();
    model.train_size = in.at("train_size").get<Index>();
    model.constant_class = in.at("constant_class").get<int>();
    for (const auto& b : in.at("binary_models")) {
      BinarySvmModel m;
      const auto pair = b.at("label_pair").get<std::vector<int>>();
      if (pair.size() != 2) throw Error("label_pair must have two entries");
      m.label_pair = {pair[0], pair[1]};
      m.dual_coefs = b.at("dual_coefs").get<std::vector<double>>();
      m.bias = b.at("bias").get<double>();
      m.support_indices = b.at("support_indices").get<IndexList>();
      m.columns = b.at("columns").get<IndexList>();
      m.converged = b.at("converged").get<bool>();
      m.iterations = b.at("iterations").get<Index>();
      m.objective = b.at("objective").get<double>();
      m.max_violation = b.at("max_violation").get<double>();
      if (m.columns.size() != m.dual_coefs.size())
        throw Error("columns and dual_coefs differ in length");
      model.binary_models.push_back(std::move(m));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed svm model file: ") + e.what());
  }
}

}  // namespace rfsvm
