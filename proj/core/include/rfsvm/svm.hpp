#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rfsvm/common.hpp"
#include "rfsvm/kernel.hpp"

namespace rfsvm {

struct SvmHyperparams {
  double c = 1.0;
  double kkt_tolerance = 1e-3;
  /// Sweep budget; 0 selects 10 * n. One sweep is n working-pair updates.
  Index max_passes = 0;
};

/// One soft-margin binary SVM in dual form. Positions refer to the training
/// set the model was solved on; `columns` maps them to columns of the kernel
/// rows passed at prediction time (identity for a plain binary solve).
struct BinarySvmModel {
  std::vector<double> dual_coefs;  // alpha_i * y_i
  double bias = 0.0;
  IndexList support_indices;       // positions with alpha_i > 0
  std::pair<int, int> label_pair{0, 1};  // class voted for by a positive / negative value
  IndexList columns;

  bool converged = false;
  Index iterations = 0;
  double objective = 0.0;          // dual objective at the returned point
  double max_violation = 0.0;      // final max KKT pair violation

  std::vector<double> alphas() const;
};

/// Dual objective sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij.
double dual_objective(const Eigen::MatrixXd& kernel, std::span<const int> signs,
                      std::span<const double> alpha);

/// Sequential minimal optimization with second-order working-pair selection
/// (maximal violator paired with the partner of largest objective gain).
/// `signs` holds +1 / -1. Stops when the maximal KKT pair violation drops
/// below hp.kkt_tolerance; if the sweep budget runs out the best point so far
/// is returned with converged == false. The bias averages the values implied
/// by free support vectors, or takes the midpoint of the feasible interval
/// when none is free. `seed` orders the fallback sweep used if a selected
/// pair makes no progress.
BinarySvmModel solve_binary_smo(const Eigen::MatrixXd& kernel, std::span<const int> signs,
                                const SvmHyperparams& hp, Seed seed = 0);
BinarySvmModel solve_binary_smo(const KernelMatrix& kernel, std::span<const int> signs,
                                const SvmHyperparams& hp, Seed seed = 0);

/// sum_i dual_coefs[i] * kernel_row[i] + bias, kernel_row aligned with the
/// model's own training positions.
double decision_value(const BinarySvmModel& model, std::span<const double> kernel_row);

/// One-vs-one composition: one binary model per pair of classes present in
/// the training labels.
struct SvmModel {
  std::vector<BinarySvmModel> binary_models;
  Index classes = 0;
  Index train_size = 0;
  int constant_class = -1;  // >= 0 when training saw a single class

  bool converged() const;
};

/// `labels` are class ids in [0, c) aligned with the kernel rows.
SvmModel fit_multiclass(const Eigen::MatrixXd& kernel, std::span<const int> labels,
                        const SvmHyperparams& hp, Seed seed = 0);
SvmModel fit_multiclass(const KernelMatrix& kernel, std::span<const int> labels,
                        const SvmHyperparams& hp, Seed seed = 0);

/// The square sub-matrix kernel(ids, ids).
Eigen::MatrixXd select_submatrix(const Eigen::MatrixXd& kernel, std::span<const Index> ids);

/// Votes of the pairwise models; ties go to the class with the larger summed
/// |decision value| over the votes it received, then to the smaller id.
std::vector<int> predict(const SvmModel& model, const Eigen::MatrixXd& kernel_rows);
std::vector<int> predict(const SvmModel& model, const KernelMatrix& kernel_rows);

std::string svm_to_json(const SvmModel& model);
SvmModel svm_from_json(const std::string& text);

}  // namespace rfsvm
