#include "rfsvm/forest.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace rfsvm {

FeatureBudget FeatureBudget::fraction(double f) {
  if (!(f > 0.0 && f <= 1.0)) throw Error("max_features fraction must lie in (0, 1]");
  return FeatureBudget(f);
}

Index FeatureBudget::count(Index m) const {
  if (m == 0) return 0;
  const double raw = is_sqrt() ? std::floor(std::sqrt(static_cast<double>(m)))
                               : std::round(fraction_ * static_cast<double>(m));
  return std::clamp<Index>(static_cast<Index>(raw), 1, m);
}

ForestHyperparams collapse_depth(ForestHyperparams hp, Index n_samples) {
  if (hp.max_depth && *hp.max_depth + 1 >= n_samples) hp.max_depth.reset();
  return hp;
}

std::string describe(const ForestHyperparams& hp) {
  std::ostringstream out;
  out << "trees=" << hp.n_trees << " depth=";
  if (hp.max_depth) out << *hp.max_depth; else out << "none";
  out << " features=";
  if (hp.max_features.is_sqrt()) out << "sqrt"; else out << hp.max_features.fraction_value();
  out << " leaf=" << hp.min_samples_leaf << " split=" << hp.min_samples_split;
  return out.str();
}

// ---------------------------------------------------------------------------

Tree::Tree(std::vector<TreeNode> nodes, std::vector<std::uint32_t> histograms,
           Index n_classes)
    : nodes_(std::move(nodes)), histograms_(std::move(histograms)), n_classes_(n_classes) {
  if (nodes_.empty() || n_classes_ == 0) throw Error("tree: empty node list");
  std::vector<bool> seen;
  for (const auto& node : nodes_) {
    if (node.is_leaf()) {
      if (node.leaf_id >= seen.size()) seen.resize(node.leaf_id + 1, false);
      if (seen[node.leaf_id]) throw Error("tree: duplicate leaf id");
      seen[node.leaf_id] = true;
    } else if (node.left >= nodes_.size() || node.right >= nodes_.size() || node.feature < 0) {
      throw Error("tree: dangling child reference");
    }
  }
  n_leaves_ = seen.size();
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw Error("tree: leaf ids are not contiguous");
  if (histograms_.size() != n_leaves_ * n_classes_) throw Error("tree: histogram size mismatch");
}

Index Tree::depth() const {
  Index deepest = 0;
  std::vector<std::pair<std::uint32_t, Index>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [id, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const auto& node = nodes_[id];
    if (!node.is_leaf()) {
      stack.emplace_back(node.left, d + 1);
      stack.emplace_back(node.right, d + 1);
    }
  }
  return deepest;
}

std::uint32_t Tree::leaf_of(std::span<const double> x) const {
  const TreeNode* node = &nodes_[0];
  while (!node->is_leaf()) {
    const auto f = static_cast<Index>(node->feature);
    if (f >= x.size()) throw Error("leaf_of: feature vector too short");
    node = &nodes_[x[f] <= node->threshold ? node->left : node->right];
  }
  return node->leaf_id;
}

int Tree::predict(std::span<const double> x) const {
  const auto hist = leaf_histogram(leaf_of(x));
  return static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
}

std::uint32_t leaf_of(const Tree& tree, std::span<const double> x) { return tree.leaf_of(x); }

double gini(std::span<const std::uint32_t> histogram) {
  double total = 0.0;
  double sum_sq = 0.0;
  for (auto count : histogram) {
    total += count;
    sum_sq += static_cast<double>(count) * count;
  }
  if (total == 0.0) return 0.0;
  return 1.0 - sum_sq / (total * total);
}

IndexList bootstrap_sample(std::span<const Index> train, Seed seed) {
  if (train.empty()) throw Error("bootstrap_sample: empty training set");
  Rng rng(seed);
  IndexList sample(train.size());
  for (auto& s : sample) s = train[rng.below(train.size())];
  return sample;
}

// ---------------------------------------------------------------------------

namespace {

struct Split {
  Index feature = 0;
  double threshold = 0.0;
  double impurity = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, std::span<const Index> sample, const ForestHyperparams& hp,
              Seed seed)
      : data_(data),
        hp_(hp),
        rng_(seed),
        n_classes_(data.c()),
        budget_(hp.max_features.count(data.m())),
        samples_(sample.begin(), sample.end()),
        feature_pool_(data.m()) {
    std::iota(feature_pool_.begin(), feature_pool_.end(), 0);
  }

  Tree build() {
    grow(0, samples_.size(), 0);
    return Tree(std::move(nodes_), std::move(histograms_), n_classes_);
  }

 private:
  double value(Index row, Index feature) const {
    return data_.features().data()[row * data_.m() + feature];
  }

  std::uint32_t grow(Index begin, Index end, Index depth) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();

    std::vector<std::uint32_t> hist(n_classes_, 0);
    for (Index i = begin; i < end; ++i) ++hist[static_cast<Index>(data_.label(samples_[i]))];

    const Index size = end - begin;
    const bool pure =
        std::count_if(hist.begin(), hist.end(), [](auto h) { return h > 0; }) <= 1;
    const bool depth_reached = hp_.max_depth && depth >= *hp_.max_depth;
    std::optional<Split> split;
    if (!pure && !depth_reached && size >= hp_.min_samples_split &&
        size >= 2 * hp_.min_samples_leaf) {
      split = find_split(begin, end, gini(hist));
    }

    if (!split) {
      nodes_[id].leaf_id = static_cast<std::uint32_t>(histograms_.size() / n_classes_);
      histograms_.insert(histograms_.end(), hist.begin(), hist.end());
      return id;
    }

    const auto mid = std::partition(
        samples_.begin() + static_cast<std::ptrdiff_t>(begin),
        samples_.begin() + static_cast<std::ptrdiff_t>(end),
        [&](Index row) { return value(row, split->feature) <= split->threshold; });
    const Index middle = static_cast<Index>(mid - samples_.begin());

    nodes_[id].feature = static_cast<std::int32_t>(split->feature);
    nodes_[id].threshold = split->threshold;
    const auto left = grow(begin, middle, depth + 1);
    const auto right = grow(middle, end, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  std::optional<Split> find_split(Index begin, Index end, double parent_impurity) {
    const int attempts = budget_ < data_.m() ? 2 : 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
      // Partial Fisher-Yates: the first budget_ entries are a uniform draw
      // without replacement, whatever order the pool was left in.
      for (Index t = 0; t < budget_; ++t) {
        const Index j = t + static_cast<Index>(rng_.below(feature_pool_.size() - t));
        std::swap(feature_pool_[t], feature_pool_[j]);
      }
      bool any_varying = false;
      std::optional<Split> best;
      for (Index t = 0; t < budget_; ++t) {
        scan_feature(feature_pool_[t], begin, end, any_varying, best);
      }
      if (best) {
        // Weighted child impurity never exceeds the parent's for Gini; guard
        // against rounding anyway.
        if (best->impurity > parent_impurity + 1e-12) return std::nullopt;
        return best;
      }
      if (any_varying) return std::nullopt;
    }
    return std::nullopt;
  }

  void scan_feature(Index feature, Index begin, Index end, bool& any_varying,
                    std::optional<Split>& best) {
    const Index size = end - begin;
    pairs_.resize(size);
    for (Index i = 0; i < size; ++i) {
      const Index row = samples_[begin + i];
      pairs_[i] = {value(row, feature), data_.label(row)};
    }
    std::sort(pairs_.begin(), pairs_.end());
    if (pairs_.front().first == pairs_.back().first) return;
    any_varying = true;

    left_.assign(n_classes_, 0);
    right_.assign(n_classes_, 0);
    for (const auto& p : pairs_) ++right_[static_cast<Index>(p.second)];
    double left_sq = 0.0;
    double right_sq = 0.0;
    for (auto r : right_) right_sq += static_cast<double>(r) * r;

    const double n = static_cast<double>(size);
    for (Index i = 0; i + 1 < size; ++i) {
      const auto y = static_cast<Index>(pairs_[i].second);
      left_sq += 2.0 * left_[y] + 1.0;
      right_sq -= 2.0 * right_[y] - 1.0;
      ++left_[y];
      --right_[y];
      if (pairs_[i].first == pairs_[i + 1].first) continue;
      const Index n_left = i + 1;
      const Index n_right = size - n_left;
      if (n_left < hp_.min_samples_leaf || n_right < hp_.min_samples_leaf) continue;

      const double nl = static_cast<double>(n_left);
      const double nr = static_cast<double>(n_right);
      const double impurity = ((nl - left_sq / nl) + (nr - right_sq / nr)) / n;

      const double lo = pairs_[i].first;
      const double hi = pairs_[i + 1].first;
      double threshold = lo + (hi - lo) / 2.0;
      if (!(threshold < hi)) threshold = lo;

      if (!best || impurity < best->impurity - 1e-12 ||
          (impurity <= best->impurity + 1e-12 &&
           (feature < best->feature ||
            (feature == best->feature && threshold < best->threshold)))) {
        best = Split{feature, threshold, impurity};
      }
    }
  }

  const Dataset& data_;
  const ForestHyperparams& hp_;
  Rng rng_;
  Index n_classes_;
  Index budget_;
  IndexList samples_;
  IndexList feature_pool_;
  std::vector<TreeNode> nodes_;
  std::vector<std::uint32_t> histograms_;
  std::vector<std::pair<double, int>> pairs_;
  std::vector<std::uint32_t> left_;
  std::vector<std::uint32_t> right_;
};

}  // namespace

Tree fit_tree(const Dataset& data, std::span<const Index> sample, const ForestHyperparams& hp,
              Seed seed) {
  if (sample.empty()) throw Error("fit_tree: empty sample");
  if (hp.min_samples_leaf < 1 || hp.min_samples_split < 2)
    throw Error("fit_tree: min_samples_leaf >= 1 and min_samples_split >= 2 required");
  return TreeBuilder(data, sample, hp, seed).build();
}

ForestModel::ForestModel(std::vector<Tree> trees, ForestHyperparams hp, Seed seed,
                         Index n_features, Index n_classes)
    : trees_(std::move(trees)),
      hp_(hp),
      seed_(seed),
      n_features_(n_features),
      n_classes_(n_classes) {}

void ForestModel::check_dimension(std::span<const double> x) const {
  if (x.size() != n_features_)
    throw Error("dimension mismatch: expected " + std::to_string(n_features_) +
                " features, got " + std::to_string(x.size()));
}

ForestModel fit_forest(const Dataset& data, std::span<const Index> train,
                       const ForestHyperparams& hp, Seed seed) {
  if (train.empty()) throw Error("fit_forest: empty training set");
  if (hp.n_trees == 0) throw Error("fit_forest: n_trees must be positive");
  std::vector<Tree> trees(hp.n_trees);
  parallel_for(hp.n_trees, [&](Index k) {
    const Seed tree_seed = derive_seed(seed, k);
    const auto sample = bootstrap_sample(train, derive_seed(tree_seed, 0));
    trees[k] = fit_tree(data, sample, hp, derive_seed(tree_seed, 1));
  });
  return ForestModel(std::move(trees), hp, seed, data.m(), data.c());
}

int predict_forest(const ForestModel& model, std::span<const double> x) {
  model.check_dimension(x);
  std::vector<Index> votes(model.n_classes(), 0);
  for (const auto& tree : model.trees()) ++votes[static_cast<Index>(tree.predict(x))];
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json hyperparams_to_json(const ForestHyperparams& hp) {
  nlohmann::json j;
  j["n_trees"] = hp.n_trees;
  j["max_depth"] = hp.max_depth ? nlohmann::json(*hp.max_depth) : nlohmann::json(nullptr);
  j["max_features"] = hp.max_features.is_sqrt() ? nlohmann::json("sqrt")
                                                : nlohmann::json(hp.max_features.fraction_value());
  j["min_samples_leaf"] = hp.min_samples_leaf;
  j["min_samples_split"] = hp.min_samples_split;
  return j;
}

ForestHyperparams hyperparams_from_json(const nlohmann::json& j) {
  ForestHyperparams hp;
  hp.n_trees = j.at("n_trees").get<Index>();
  if (!j.at("max_depth").is_null()) hp.max_depth = j.at("max_depth").get<Index>();
  const auto& mf = j.at("max_features");
  hp.max_features = mf.is_string() ? FeatureBudget::sqrt()
                                   : FeatureBudget::fraction(mf.get<double>());
  hp.min_samples_leaf = j.at("min_samples_leaf").get<Index>();
  hp.min_samples_split = j.at("min_samples_split").get<Index>();
  return hp;
}

}  // namespace

std::string forest_to_json(const ForestModel& model) {
  nlohmann::json out;
  out["format"] = "rfsvm-forest";
  out["version"] = 1;
  out["n_features"] = model.n_features();
  out["n_classes"] = model.n_classes();
  out["seed"] = model.training_seed();
  out["hyperparams"] = hyperparams_to_json(model.hyperparams());
  auto& trees = out["trees"] = nlohmann::json::array();
  for (const auto& tree : model.trees()) {
    std::vector<std::int32_t> feature;
    std::vector<double> threshold;
    std::vector<std::uint32_t> left, right, leaf;
    for (const auto& node : tree.nodes()) {
      feature.push_back(node.feature);
      threshold.push_back(node.threshold);
      left.push_back(node.left);
      right.push_back(node.right);
      leaf.push_back(node.leaf_id);
    }
    trees.push_back({{"feature", feature},
                     {"threshold", threshold},
                     {"left", left},
                     {"right", right},
                     {"leaf_id", leaf},
                     {"histograms", tree.histograms()}});
  }
  return out.dump();
}

ForestModel forest_from_json(const std::string& text) {
  try {
    const auto in = nlohmann::json::parse(text);
    if (in.at("format") != "rfsvm-forest") throw Error("not a forest file");
    const auto n_classes = in.at("n_classes").get<Index>();
    std::vector<Tree> trees;
    for (const auto& t : in.at("trees")) {
      const auto feature = t.at("feature").get<std::vector<std::int32_t>>();
      const auto threshold = t.at("threshold").get<std::vector<double>>();
      const auto left = t.at("left").get<std::vector<std::uint32_t>>();
      const auto right = t.at("right").get<std::vector<std::uint32_t>>();
      const auto leaf = t.at("leaf_id").get<std::vector<std::uint32_t>>();
      const Index count = feature.size();
      if (threshold.size() != count || left.size() != count || right.size() != count ||
          leaf.size() != count)
        throw Error("tree arrays differ in length");
      std::vector<TreeNode> nodes(count);
      for (Index i = 0; i < count; ++i)
        nodes[i] = TreeNode{feature[i], threshold[i], left[i], right[i], leaf[i]};
      trees.emplace_back(std::move(nodes), t.at("histograms").get<std::vector<std::uint32_t>>(),
                         n_classes);
    }
    return ForestModel(std::move(trees), hyperparams_from_json(in.at("hyperparams")),
                       in.at("seed").get<Seed>(), in.at("n_features").get<Index>(), n_classes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed forest file: ") + e.what());
  }
}

}  // namespace rfsvm
