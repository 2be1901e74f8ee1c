#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rfsvm/common.hpp"
#include "rfsvm/data.hpp"

namespace rfsvm {

/// Number of candidate features drawn at each node: either a fraction of m
/// (rounded, at least one) or floor(sqrt(m)).
class FeatureBudget {
 public:
  static FeatureBudget fraction(double f);
  static FeatureBudget sqrt() { return FeatureBudget(-1.0); }

  Index count(Index m) const;
  bool is_sqrt() const noexcept { return fraction_ < 0.0; }
  double fraction_value() const noexcept { return fraction_; }

  friend bool operator==(const FeatureBudget&, const FeatureBudget&) = default;

 private:
  explicit FeatureBudget(double f) : fraction_(f) {}
  double fraction_;
};

struct ForestHyperparams {
  Index n_trees = 500;
  std::optional<Index> max_depth;  // nullopt: grow until pure
  FeatureBudget max_features = FeatureBudget::sqrt();
  Index min_samples_leaf = 1;
  Index min_samples_split = 2;

  friend bool operator==(const ForestHyperparams&, const ForestHyperparams&) = default;
};

/// Depth limits that cannot bind on a bootstrap of `n_samples` instances are
/// mapped to unlimited. A node holding one instance never splits, so no path
/// can exceed n_samples - 1 edges.
ForestHyperparams collapse_depth(ForestHyperparams hp, Index n_samples);

std::string describe(const ForestHyperparams& hp);

/// One node of a flat tree. Internal nodes carry a split, leaves a leaf id.
struct TreeNode {
  static constexpr std::int32_t kLeaf = -1;

  std::int32_t feature = kLeaf;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t leaf_id = 0;

  bool is_leaf() const noexcept { return feature == kLeaf; }
};

/// A CART tree stored as a flat node array, root at 0. Leaf ids are
/// contiguous from 0; leaf_histogram(id) holds the per-class bootstrap
/// counts that reached the leaf.
class Tree {
 public:
  Tree() = default;
  Tree(std::vector<TreeNode> nodes, std::vector<std::uint32_t> histograms, Index n_classes);

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  Index n_leaves() const noexcept { return n_leaves_; }
  Index n_classes() const noexcept { return n_classes_; }
  Index depth() const;

  /// Left iff x[feature] <= threshold. Throws Error on dimension mismatch
  /// against the largest feature index used (callers validate full width).
  std::uint32_t leaf_of(std::span<const double> x) const;

  std::span<const std::uint32_t> leaf_histogram(std::uint32_t leaf) const {
    return {histograms_.data() + static_cast<Index>(leaf) * n_classes_, n_classes_};
  }
  const std::vector<std::uint32_t>& histograms() const noexcept { return histograms_; }

  /// argmax of the leaf histogram, smaller class id on ties.
  int predict(std::span<const double> x) const;

 private:
  std::vector<TreeNode> nodes_;
  std::vector<std::uint32_t> histograms_;  // n_leaves x n_classes
  Index n_leaves_ = 0;
  Index n_classes_ = 0;
};

/// Gini impurity 1 - sum p_j^2 of a class histogram.
double gini(std::span<const std::uint32_t> histogram);

/// |train| draws with replacement. Throws for an empty training set.
IndexList bootstrap_sample(std::span<const Index> train, Seed seed);

/// Grows one CART tree on `sample` (dataset row indices, duplicates allowed).
/// At each node, draws the feature budget without replacement and picks the
/// (feature, midpoint threshold) minimizing the weighted child Gini; ties go
/// to the lowest feature index, then the lowest threshold. If every candidate
/// is constant on the node the draw is repeated once before giving up.
Tree fit_tree(const Dataset& data, std::span<const Index> sample,
              const ForestHyperparams& hp, Seed seed);

class ForestModel {
 public:
  ForestModel() = default;
  ForestModel(std::vector<Tree> trees, ForestHyperparams hp, Seed seed, Index n_features,
              Index n_classes);

  const std::vector<Tree>& trees() const noexcept { return trees_; }
  Index size() const noexcept { return trees_.size(); }
  const ForestHyperparams& hyperparams() const noexcept { return hp_; }
  Seed training_seed() const noexcept { return seed_; }
  Index n_features() const noexcept { return n_features_; }
  Index n_classes() const noexcept { return n_classes_; }

  /// Throws Error unless x has n_features() components.
  void check_dimension(std::span<const double> x) const;

 private:
  std::vector<Tree> trees_;
  ForestHyperparams hp_;
  Seed seed_ = 0;
  Index n_features_ = 0;
  Index n_classes_ = 0;
};

/// hp.n_trees trees; tree k is seeded with derive_seed(seed, k) for both its
/// bootstrap and its node feature draws, so the result does not depend on the
/// worker count.
ForestModel fit_forest(const Dataset& data, std::span<const Index> train,
                       const ForestHyperparams& hp, Seed seed);

std::uint32_t leaf_of(const Tree& tree, std::span<const double> x);

/// Majority vote over per-tree predictions, smaller class id on ties.
int predict_forest(const ForestModel& model, std::span<const double> x);

/// Self-describing JSON with the nodes of each tree as flat arrays.
std::string forest_to_json(const ForestModel& model);
ForestModel forest_from_json(const std::string& text);

}  // namespace rfsvm
