#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rfsvm/data.hpp"
#include "rfsvm/forest.hpp"
#include "rfsvm/kernel.hpp"
#include "rfsvm/stats.hpp"
#include "rfsvm/svm.hpp"

namespace rfsvm {

enum class Method { rf, svm_rbf, rfsvm, cossvm };

const char* to_string(Method method) noexcept;
Method method_from_string(const std::string& name);

// ---------------------------------------------------------------------------
// Configuration

struct RfGrid {
  std::vector<std::optional<Index>> max_depth;
  std::vector<double> max_features;
  std::vector<Index> min_samples_leaf;
  std::vector<Index> min_samples_split;
  Index n_trees = 500;
  /// Upper bound on distinct grid points evaluated per tuning run.
  Index budget = 100;
};

struct Grids {
  std::vector<double> c;
  std::vector<double> gamma;
  RfGrid rf;
};

struct DatasetSpec {
  std::filesystem::path path;
  std::string name;  // empty: file stem
  LabelColumn label_column = std::string("label");
};

struct ExperimentConfig {
  std::vector<DatasetSpec> datasets;
  std::vector<Method> methods{Method::rf, Method::svm_rbf, Method::rfsvm, Method::cossvm};
  Index repetitions = 10;
  Index cv_folds = 3;
  Grids grids = default_grids();
  /// Forest behind the RF kernel; its grid is C only.
  ForestHyperparams rfsvm_forest{};
  SvmHyperparams svm{};
  Seed seed = 0;
  std::filesystem::path output_dir = "results";

  /// The hyperparameter search space: C = 10^-2..10^4, gamma = 10^-4..10^2,
  /// depth 10^1..10^10 or unlimited, features {1,5,10,20,30}%, leaf {1,2,4},
  /// split {2,5,10}, 500 trees.
  static Grids default_grids();

  /// Throws Error for an empty or out-of-domain grid, repetitions < 1 or
  /// cv_folds < 2.
  void validate() const;
};

/// Reads a JSON config; dataset paths are resolved against the file's folder.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const std::string& text,
                                  const std::filesystem::path& base_dir = {});
std::string config_to_json(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Metrics

/// Fraction of exact matches. Throws on empty or mismatched input.
double accuracy(std::span<const int> predicted, std::span<const int> actual);

/// F1 from true positives, false positives and false negatives pooled over
/// the c classes.
double micro_f1(std::span<const int> predicted, std::span<const int> actual, Index c);

// ---------------------------------------------------------------------------
// Tuning

struct Hyperparams {
  std::optional<double> c;
  std::optional<double> gamma;
  std::optional<ForestHyperparams> forest;

  std::string to_string() const;
};

/// Candidate points searched for `method`, in evaluation order (C ascending
/// first). The RF grid is depth-collapsed for `n_train` instances,
/// de-duplicated and, if still larger than the budget, thinned to evenly
/// spaced points of its enumeration order.
std::vector<Hyperparams> candidate_grid(Method method, const ExperimentConfig& config,
                                        Index n_train);

/// A model fit on dataset rows `train`, ready to label other rows.
struct FittedModel {
  Method method = Method::rfsvm;
  IndexList train;
  Hyperparams hyperparams;
  std::optional<ForestModel> forest;
  std::optional<SvmModel> svm;

  std::vector<int> predict(const Dataset& data, std::span<const Index> rows) const;
};

struct TuningResult {
  FittedModel model;
  std::optional<double> cv_accuracy;  // absent when the grid has one point
  Index candidates_evaluated = 0;
  std::vector<std::string> diagnostics;
};

/// Fits `method` with `hp` on `train`. For rfsvm the train kernel is checked
/// for unit diagonal and positive semi-definiteness (tolerance 1e-8) before
/// the solver sees it.
FittedModel fit_method(Method method, const Dataset& data, std::span<const Index> train,
                       const Hyperparams& hp, const ExperimentConfig& config, Seed seed);

/// Exhaustive search over candidate_grid scored by mean stratified k-fold
/// accuracy, then a refit of the best point on all of `train`. Ties go to the
/// earlier candidate (smaller C, then smaller grid index). A point whose
/// solver does not converge on some fold scores 0 and is logged.
TuningResult tune_and_fit(Method method, const Dataset& data, std::span<const Index> train,
                          const ExperimentConfig& config, Seed seed);

// ---------------------------------------------------------------------------
// Experiment

struct DatasetSummary {
  std::string name;
  Index n = 0;
  Index m = 0;
  Index c = 0;
  std::vector<Index> class_counts;
  HdlssProfile profile;
};

DatasetSummary summarize(const Dataset& d);

struct MethodResult {
  std::string dataset;
  Method method = Method::rfsvm;
  bool ok = true;  // false: the cell is absent from rank-based reports
  std::vector<double> accuracies;
  std::vector<double> micro_f1s;
  std::vector<std::string> hyperparams;
  std::vector<std::optional<double>> cv_accuracies;
  std::vector<double> seconds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population standard deviation
  std::vector<std::string> diagnostics;
};

/// Seed of the half-splits for a dataset; shared by all methods so their
/// scores are paired.
Seed split_seed(const ExperimentConfig& config, const std::string& dataset_name);

/// Tunes and evaluates `method` on every half-split of `data`. Any failure
/// marks the result absent with the error recorded in diagnostics.
MethodResult run_method_on_dataset(Method method, const Dataset& data,
                                   const ExperimentConfig& config);

struct ExperimentResults {
  std::vector<DatasetSummary> datasets;
  std::vector<MethodResult> results;
};

ExperimentResults run_experiment(const ExperimentConfig& config);

std::string results_to_json(const ExperimentResults& results);
ExperimentResults results_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Reporting

struct BayesMatrix {
  double rope = 0.0;
  Eigen::MatrixXd p_a_gt_b;  // row method a, column method b
  Eigen::MatrixXd p_rope;
};

struct SubReport {
  std::string scope;  // "all" or an HDLSS band name
  ScoreTable table;
  std::optional<FriedmanReport> friedman;
  std::vector<BayesMatrix> bayes;
  std::vector<Index> wins;  // per method; ties credit every tied winner
  std::vector<std::string> notes;
};

struct ReportOptions {
  std::vector<double> ropes{0.005, 0.01};
  Index samples = 50000;
  double alpha = 0.05;
  Seed seed = 0;
};

struct Report {
  SubReport global;
  std::vector<SubReport> bands;  // very_hdlss, mid_hdlss, non_hdlss
  std::vector<std::string> excluded_datasets;
  std::vector<std::string> warnings;
};

/// Score tables, Friedman/Nemenyi, pairwise Bayesian sign tests and win
/// counts over all datasets and per HDLSS band. Datasets with an absent
/// cell are excluded (with a warning); a dataset missing a method entirely
/// is an error.
Report assemble_report(const ExperimentResults& results, const ReportOptions& options = {});

std::string report_to_json(const Report& report);

/// Writes results.json, report.json, scores.csv, timings.csv,
/// results_<method>.csv, cd_<scope>.json and bayes_<scope>_rope_<r>.csv.
void write_report_bundle(const ExperimentResults& results, const Report& report,
                         const std::filesystem::path& dir);

}  // namespace rfsvm
