#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rfsvm/common.hpp"

namespace rfsvm {

/// Row-major so that a single instance is a contiguous span.
using FeatureMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A labeled feature matrix. Labels are dense class ids in [0, c); the
/// original label strings are kept in `class_names` so the encoding can be
/// reversed. Immutable after construction.
class Dataset {
 public:
  Dataset() = default;

  /// Validates the invariants (finite features, labels in range, every class
  /// populated) and computes class_counts. Throws Error on violation.
  Dataset(std::string name, FeatureMatrix features, std::vector<int> labels,
          std::vector<std::string> class_names);

  const std::string& name() const noexcept { return name_; }
  const FeatureMatrix& features() const noexcept { return features_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<Index>& class_counts() const noexcept { return class_counts_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  Index n() const noexcept { return static_cast<Index>(features_.rows()); }
  Index m() const noexcept { return static_cast<Index>(features_.cols()); }
  Index c() const noexcept { return class_counts_.size(); }

  std::span<const double> row(Index i) const {
    return {features_.data() + i * m(), m()};
  }
  int label(Index i) const { return labels_[i]; }

  /// Maps encoded labels back to the strings read from the source.
  std::vector<std::string> decode(std::span<const int> encoded) const;

 private:
  std::string name_;
  FeatureMatrix features_;
  std::vector<int> labels_;
  std::vector<Index> class_counts_;
  std::vector<std::string> class_names_;
};

/// Label column selected by header name or zero-based position.
using LabelColumn = std::variant<std::string, Index>;

/// Reads a comma-separated file with a header row. Labels are re-encoded in
/// order of first appearance. Throws Error for a missing file, a missing label
/// column, a non-numeric or non-finite feature cell, ragged rows, or a
/// dataset with fewer than two classes.
Dataset load_csv(const std::filesystem::path& path, const LabelColumn& label_column);

/// Writes `d` in the format load_csv reads, label column last.
void save_csv(const Dataset& d, const std::filesystem::path& path,
              const std::string& label_header = "label");

// ---------------------------------------------------------------------------
// HDLSS profile

enum class HdlssBand { very_hdlss, mid_hdlss, non_hdlss };

struct HdlssProfile {
  double omega = 0.0;
  double imbalance_ratio = 1.0;
  HdlssBand band = HdlssBand::non_hdlss;
};

/// Average number of instances per class divided by the feature count.
double omega(const Dataset& d);
double omega(std::span<const Index> class_counts, Index m);

/// Majority-class count over minority-class count. Throws for c < 2.
double imbalance_ratio(const Dataset& d);
double imbalance_ratio(std::span<const Index> class_counts);

/// very_hdlss below 0.015, mid_hdlss below 1, non_hdlss otherwise.
HdlssBand band_of(double omega_value) noexcept;
const char* to_string(HdlssBand band) noexcept;

HdlssProfile profile(const Dataset& d);

// ---------------------------------------------------------------------------
// Splitting

struct SplitPlan {
  IndexList train_indices;
  IndexList test_indices;
  Seed seed = 0;
};

/// `repetitions` stratified half/half splits; train receives ceil(n/2)
/// instances and every class appears in both halves. Deterministic in seed.
/// Throws if some class has a single instance or n < 2c.
std::vector<SplitPlan> random_half_splits(const Dataset& d, Index repetitions, Seed seed);

struct Fold {
  IndexList fit;
  IndexList validate;
};

struct FoldPlan {
  std::vector<Fold> folds;
  /// One entry per class with fewer members than k.
  std::vector<std::string> warnings;
};

/// Stratified k-fold partition of `train`. `labels` is indexed by the values
/// stored in `train` (i.e. dataset-global labels). Classes are dealt
/// round-robin across folds, so a class with fewer than k members simply
/// misses some folds; that case is reported in FoldPlan::warnings.
FoldPlan kfold_indices(std::span<const Index> train, std::span<const int> labels,
                       Index k, Seed seed);

/// JSON manifest of split plans: [{"seed":..,"train":[..],"test":[..]}, ...].
std::string splits_to_json(std::span<const SplitPlan> splits);
std::vector<SplitPlan> splits_from_json(const std::string& text);

}  // namespace rfsvm
