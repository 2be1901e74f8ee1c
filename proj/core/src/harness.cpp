#include "rfsvm/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace rfsvm {

using nlohmann::json;

const char* to_string(Method method) noexcept {
  switch (method) {
    case Method::rf: return "rf";
    case Method::svm_rbf: return "svm_rbf";
    case Method::rfsvm: return "rfsvm";
    case Method::cossvm: return "cossvm";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "rf") return Method::rf;
  if (name == "svm_rbf") return Method::svm_rbf;
  if (name == "rfsvm") return Method::rfsvm;
  if (name == "cossvm") return Method::cossvm;
  throw Error("unknown method '" + name + "'");
}

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buffer[32];
  const auto res = std::to_chars(buffer, buffer + sizeof(buffer), v);
  return std::string(buffer, res.ptr);
}

std::vector<double> powers_of_ten(int lo, int hi) {
  std::vector<double> out;
  for (int i = lo; i <= hi; ++i) out.push_back(std::pow(10.0, i));
  return out;
}

bool is_power_of_ten_in(double v, int lo, int hi) {
  if (!(v > 0.0)) return false;
  const double e = std::log10(v);
  const double r = std::round(e);
  return std::abs(e - r) < 1e-9 && r >= lo && r <= hi;
}

bool contains(std::span<const double> allowed, double v) {
  return std::any_of(allowed.begin(), allowed.end(),
                     [&](double a) { return std::abs(a - v) <= 1e-12; });
}

std::vector<int> labels_of(const Dataset& data, std::span<const Index> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (Index r : rows) out.push_back(data.label(r));
  return out;
}

// Positions of `subset` inside the sorted list `all`.
IndexList positions_in(std::span<const Index> all, std::span<const Index> subset) {
  IndexList out;
  out.reserve(subset.size());
  for (Index id : subset) {
    const auto it = std::lower_bound(all.begin(), all.end(), id);
    if (it == all.end() || *it != id) throw Error("fold index outside the training set");
    out.push_back(static_cast<Index>(it - all.begin()));
  }
  return out;
}

Eigen::MatrixXd select_block(const Eigen::MatrixXd& k, std::span<const Index> rows,
                             std::span<const Index> cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (Index a = 0; a < rows.size(); ++a)
    for (Index b = 0; b < cols.size(); ++b)
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          k(static_cast<Eigen::Index>(rows[a]), static_cast<Eigen::Index>(cols[b]));
  return out;
}

void require_valid_rf_kernel(const KernelMatrix& k) {
  const auto check = validate_kernel(k, 1e-8);
  if (!check.ok()) {
    std::ostringstream msg;
    msg << "rf train kernel failed validation: asymmetry " << check.max_asymmetry
        << ", min eigenvalue " << check.min_eigenvalue << ", diagonal deviation "
        << check.max_diagonal_deviation;
    throw Error(msg.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Grids ExperimentConfig::default_grids() {
  Grids g;
  g.c = powers_of_ten(-2, 4);
  g.gamma = powers_of_ten(-4, 2);
  for (int i = 1; i <= 10; ++i)
    g.rf.max_depth.emplace_back(static_cast<Index>(std::llround(std::pow(10.0, i))));
  g.rf.max_depth.emplace_back(std::nullopt);
  g.rf.max_features = {0.01, 0.05, 0.10, 0.20, 0.30};
  g.rf.min_samples_leaf = {1, 2, 4};
  g.rf.min_samples_split = {2, 5, 10};
  g.rf.n_trees = 500;
  g.rf.budget = 100;
  return g;
}

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw Error("config: repetitions must be at least 1");
  if (cv_folds < 2) throw Error("config: cv_folds must be at least 2");
  if (methods.empty()) throw Error("config: no methods selected");
  if (grids.c.empty() || grids.gamma.empty()) throw Error("config: empty C or gamma grid");
  for (double c : grids.c)
    if (!is_power_of_ten_in(c, -2, 4)) throw Error("config: C grid value outside 10^-2..10^4");
  for (double g : grids.gamma)
    if (!is_power_of_ten_in(g, -4, 2)) throw Error("config: gamma grid value outside 10^-4..10^2");

  const auto& rf = grids.rf;
  if (rf.max_depth.empty() || rf.max_features.empty() || rf.min_samples_leaf.empty() ||
      rf.min_samples_split.empty())
    throw Error("config: empty random forest grid");
  for (const auto& d : rf.max_depth)
    if (d && !is_power_of_ten_in(static_cast<double>(*d), 1, 10))
      throw Error("config: max_depth grid value outside 10^1..10^10");
  static constexpr double kFeatures[] = {0.01, 0.05, 0.10, 0.20, 0.30};
  for (double f : rf.max_features)
    if (!contains(kFeatures, f)) throw Error("config: max_features grid value outside {1,5,10,20,30}%");
  for (Index v : rf.min_samples_leaf)
    if (v != 1 && v != 2 && v != 4) throw Error("config: min_samples_leaf grid value outside {1,2,4}");
  for (Index v : rf.min_samples_split)
    if (v != 2 && v != 5 && v != 10) throw Error("config: min_samples_split grid value outside {2,5,10}");
  if (rf.n_trees < 1 || rf.budget < 1) throw Error("config: n_trees and budget must be positive");

  if (rfsvm_forest.n_trees < 1) throw Error("config: rfsvm forest needs at least one tree");
  if (rfsvm_forest.min_samples_leaf < 1 || rfsvm_forest.min_samples_split < 2)
    throw Error("config: rfsvm forest leaf/split sizes out of range");
  if (!(svm.kkt_tolerance > 0.0 && svm.kkt_tolerance <= 0.1))
    throw Error("config: kkt_tolerance must lie in (0, 0.1]");
}

namespace {

json forest_hp_to_json(const ForestHyperparams& hp) {
  return {{"n_trees", hp.n_trees},
          {"max_depth", hp.max_depth ? json(*hp.max_depth) : json(nullptr)},
          {"max_features", hp.max_features.is_sqrt() ? json("sqrt")
                                                     : json(hp.max_features.fraction_value())},
          {"min_samples_leaf", hp.min_samples_leaf},
          {"min_samples_split", hp.min_samples_split}};
}

ForestHyperparams forest_hp_from_json(const json& j, ForestHyperparams hp) {
  if (j.contains("n_trees")) hp.n_trees = j["n_trees"].get<Index>();
  if (j.contains("max_depth")) {
    if (j["max_depth"].is_null()) hp.max_depth.reset();
    else hp.max_depth = j["max_depth"].get<Index>();
  }
  if (j.contains("max_features")) {
    const auto& mf = j["max_features"];
    if (mf.is_string()) {
      if (mf.get<std::string>() != "sqrt") throw Error("config: max_features must be 'sqrt' or a fraction");
      hp.max_features = FeatureBudget::sqrt();
    } else {
      hp.max_features = FeatureBudget::fraction(mf.get<double>());
    }
  }
  if (j.contains("min_samples_leaf")) hp.min_samples_leaf = j["min_samples_leaf"].get<Index>();
  if (j.contains("min_samples_split")) hp.min_samples_split = j["min_samples_split"].get<Index>();
  return hp;
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  try {
    const auto in = json::parse(text, nullptr, true, true);
    for (const auto& d : in.at("datasets")) {
      DatasetSpec spec;
      std::filesystem::path p = d.at("path").get<std::string>();
      spec.path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
      spec.name = d.value("name", std::string());
      if (d.contains("label_column")) {
        const auto& lc = d["label_column"];
        if (lc.is_number_integer()) spec.label_column = lc.get<Index>();
        else spec.label_column = lc.get<std::string>();
      }
      cfg.datasets.push_back(std::move(spec));
    }
    if (in.contains("methods")) {
      cfg.methods.clear();
      for (const auto& m : in["methods"]) cfg.methods.push_back(method_from_string(m.get<std::string>()));
    }
    cfg.repetitions = in.value("repetitions", cfg.repetitions);
    cfg.cv_folds = in.value("cv_folds", cfg.cv_folds);
    cfg.seed = in.value("seed", cfg.seed);
    if (in.contains("output_dir")) {
      std::filesystem::path out = in["output_dir"].get<std::string>();
      cfg.output_dir = out.is_relative() && !base_dir.empty() ? base_dir / out : out;
    }
    if (in.contains("grids")) {
      const auto& g = in["grids"];
      if (g.contains("c")) cfg.grids.c = g["c"].get<std::vector<double>>();
      if (g.contains("gamma")) cfg.grids.gamma = g["gamma"].get<std::vector<double>>();
      if (g.contains("rf")) {
        const auto& rf = g["rf"];
        if (rf.contains("max_depth")) {
          cfg.grids.rf.max_depth.clear();
          for (const auto& d : rf["max_depth"])
            cfg.grids.rf.max_depth.push_back(d.is_null() ? std::nullopt
                                                         : std::optional<Index>(d.get<Index>()));
        }
        if (rf.contains("max_features"))
          cfg.grids.rf.max_features = rf["max_features"].get<std::vector<double>>();
        if (rf.contains("min_samples_leaf"))
          cfg.grids.rf.min_samples_leaf = rf["min_samples_leaf"].get<std::vector<Index>>();
        if (rf.contains("min_samples_split"))
          cfg.grids.rf.min_samples_split = rf["min_samples_split"].get<std::vector<Index>>();
        cfg.grids.rf.n_trees = rf.value("n_trees", cfg.grids.rf.n_trees);
        cfg.grids.rf.budget = rf.value("budget", cfg.grids.rf.budget);
      }
    }
    if (in.contains("rfsvm_forest")) cfg.rfsvm_forest = forest_hp_from_json(in["rfsvm_forest"], cfg.rfsvm_forest);
    if (in.contains("svm")) {
      cfg.svm.kkt_tolerance = in["svm"].value("kkt_tolerance", cfg.svm.kkt_tolerance);
      cfg.svm.max_passes = in["svm"].value("max_passes", cfg.svm.max_passes);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return config_from_json(buffer.str(), path.parent_path());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json out;
  auto& datasets = out["datasets"] = json::array();
  for (const auto& d : cfg.datasets) {
    json item{{"path", d.path.string()}, {"name", d.name}};
    if (const auto* name = std::get_if<std::string>(&d.label_column)) item["label_column"] = *name;
    else item["label_column"] = std::get<Index>(d.label_column);
    datasets.push_back(std::move(item));
  }
  auto& methods = out["methods"] = json::array();
  for (Method m : cfg.methods) methods.push_back(to_string(m));
  out["repetitions"] = cfg.repetitions;
  out["cv_folds"] = cfg.cv_folds;
  out["seed"] = cfg.seed;
  out["output_dir"] = cfg.output_dir.string();
  json depth = json::array();
  for (const auto& d : cfg.grids.rf.max_depth) depth.push_back(d ? json(*d) : json(nullptr));
  out["grids"] = {{"c", cfg.grids.c},
                  {"gamma", cfg.grids.gamma},
                  {"rf",
                   {{"max_depth", depth},
                    {"max_features", cfg.grids.rf.max_features},
                    {"min_samples_leaf", cfg.grids.rf.min_samples_leaf},
                    {"min_samples_split", cfg.grids.rf.min_samples_split},
                    {"n_trees", cfg.grids.rf.n_trees},
                    {"budget", cfg.grids.rf.budget}}}};
  out["rfsvm_forest"] = forest_hp_to_json(cfg.rfsvm_forest);
  out["svm"] = {{"kkt_tolerance", cfg.svm.kkt_tolerance}, {"max_passes", cfg.svm.max_passes}};
  return out.dump(2);
}

// ---------------------------------------------------------------------------

double accuracy(std::span<const int> predicted, std::span<const int> actual) {
  if (predicted.size() != actual.size()) throw Error("accuracy: length mismatch");
  if (predicted.empty()) throw Error("accuracy: empty input");
  Index hits = 0;
  for (Index i = 0; i < predicted.size(); ++i) hits += predicted[i] == actual[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double micro_f1(std::span<const int> predicted, std::span<const int> actual, Index c) {
  if (predicted.size() != actual.size()) throw Error("micro_f1: length mismatch");
  if (predicted.empty()) throw Error("micro_f1: empty input");
  std::vector<Index> tp(c, 0), fp(c, 0), fn(c, 0);
  for (Index i = 0; i < predicted.size(); ++i) {
    const int p = predicted[i];
    const int a = actual[i];
    if (p < 0 || a < 0 || static_cast<Index>(p) >= c || static_cast<Index>(a) >= c)
      throw Error("micro_f1: class id out of range");
    if (p == a) {
      ++tp[static_cast<Index>(p)];
    } else {
      ++fp[static_cast<Index>(p)];
      ++fn[static_cast<Index>(a)];
    }
  }
  const double t = static_cast<double>(std::accumulate(tp.begin(), tp.end(), Index{0}));
  const double f_p = static_cast<double>(std::accumulate(fp.begin(), fp.end(), Index{0}));
  const double f_n = static_cast<double>(std::accumulate(fn.begin(), fn.end(), Index{0}));
  const double denom = 2.0 * t + f_p + f_n;
  return denom == 0.0 ? 0.0 : 2.0 * t / denom;
}

// ---------------------------------------------------------------------------

std::string Hyperparams::to_string() const {
  std::ostringstream out;
  const char* sep = "";
  if (c) { out << "C=" << *c; sep = " "; }
  if (gamma) { out << sep << "gamma=" << *gamma; sep = " "; }
  if (forest) out << sep << describe(*forest);
  return out.str();
}

std::vector<Hyperparams> candidate_grid(Method method, const ExperimentConfig& config,
                                        Index n_train) {
  std::vector<double> cs = config.grids.c;
  std::sort(cs.begin(), cs.end());
  cs.erase(std::unique(cs.begin(), cs.end()), cs.end());

  std::vector<Hyperparams> out;
  switch (method) {
    case Method::rfsvm:
    case Method::cossvm:
      for (double c : cs) out.push_back({c, std::nullopt, std::nullopt});
      break;
    case Method::svm_rbf:
      for (double c : cs)
        for (double g : config.grids.gamma) out.push_back({c, g, std::nullopt});
      break;
    case Method::rf: {
      const auto& rf = config.grids.rf;
      std::vector<ForestHyperparams> distinct;
      for (const auto& depth : rf.max_depth)
        for (double mf : rf.max_features)
          for (Index leaf : rf.min_samples_leaf)
            for (Index split : rf.min_samples_split) {
              ForestHyperparams hp;
              hp.n_trees = rf.n_trees;
              hp.max_depth = depth;
              hp.max_features = FeatureBudget::fraction(mf);
              hp.min_samples_leaf = leaf;
              hp.min_samples_split = split;
              hp = collapse_depth(hp, n_train);
              if (std::find(distinct.begin(), distinct.end(), hp) == distinct.end())
                distinct.push_back(hp);
            }
      const Index total = distinct.size();
      const Index take = std::min(total, rf.budget);
      for (Index i = 0; i < take; ++i)
        out.push_back({std::nullopt, std::nullopt, distinct[i * total / take]});
      break;
    }
  }
  return out;
}

std::vector<int> FittedModel::predict(const Dataset& data, std::span<const Index> rows) const {
  switch (method) {
    case Method::rf: {
      std::vector<int> out;
      out.reserve(rows.size());
      for (Index r : rows) out.push_back(predict_forest(*forest, data.row(r)));
      return out;
    }
    case Method::rfsvm:
      return rfsvm::predict(*svm, rf_kernel_test(*forest, data, rows, train));
    case Method::cossvm:
      return rfsvm::predict(*svm, cosine_kernel(data, rows, train));
    case Method::svm_rbf:
      return rfsvm::predict(*svm, rbf_kernel(data, rows, train, *hyperparams.gamma));
  }
  throw Error("unknown method");
}

FittedModel fit_method(Method method, const Dataset& data, std::span<const Index> train,
                       const Hyperparams& hp, const ExperimentConfig& config, Seed seed) {
  FittedModel model;
  model.method = method;
  model.train.assign(train.begin(), train.end());
  model.hyperparams = hp;
  const auto labels = labels_of(data, train);
  SvmHyperparams svm_hp = config.svm;
  if (hp.c) svm_hp.c = *hp.c;

  switch (method) {
    case Method::rf:
      model.forest = fit_forest(data, train, hp.forest.value(), seed);
      break;
    case Method::rfsvm: {
      model.hyperparams.forest = config.rfsvm_forest;
      model.forest = fit_forest(data, train, config.rfsvm_forest, seed);
      const auto kernel = rf_kernel_train(*model.forest, data, train);
      require_valid_rf_kernel(kernel);
      model.svm = fit_multiclass(kernel, labels, svm_hp, seed);
      break;
    }
    case Method::cossvm:
      model.svm = fit_multiclass(cosine_kernel(data, train, train), labels, svm_hp, seed);
      break;
    case Method::svm_rbf:
      model.svm = fit_multiclass(rbf_kernel(data, train, train, hp.gamma.value()), labels, svm_hp, seed);
      break;
  }
  return model;
}

TuningResult tune_and_fit(Method method, const Dataset& data, std::span<const Index> train,
                          const ExperimentConfig& config, Seed seed) {
  if (train.empty()) throw Error("tune_and_fit: empty training set");
  IndexList sorted_train(train.begin(), train.end());
  std::sort(sorted_train.begin(), sorted_train.end());

  TuningResult result;
  const auto grid = candidate_grid(method, config, sorted_train.size());
  result.candidates_evaluated = grid.size();
  Index best = 0;

  if (grid.size() > 1) {
    const auto plan = kfold_indices(sorted_train, data.labels(), config.cv_folds,
                                    derive_seed(seed, 0x6b666f6c64ULL));
    for (const auto& w : plan.warnings) result.diagnostics.push_back("cv: " + w);

    std::vector<double> score(grid.size(), 0.0);
    std::vector<bool> failed(grid.size(), false);
    auto note_failure = [&](Index p, Index f, const std::string& what) {
      if (!failed[p])
        result.diagnostics.push_back(grid[p].to_string() + " fold " + std::to_string(f) + ": " + what);
      failed[p] = true;
    };

    // Kernels that do not depend on the fold are built once over the whole
    // training half and sliced per fold.
    std::map<double, Eigen::MatrixXd> full_kernels;
    auto full_kernel = [&](const Hyperparams& hp) -> const Eigen::MatrixXd& {
      const double key = method == Method::svm_rbf ? *hp.gamma : 0.0;
      auto it = full_kernels.find(key);
      if (it == full_kernels.end()) {
        auto k = method == Method::svm_rbf ? rbf_kernel(data, sorted_train, sorted_train, key)
                                           : cosine_kernel(data, sorted_train, sorted_train);
        it = full_kernels.emplace(key, std::move(k.values)).first;
      }
      return it->second;
    };

    for (Index f = 0; f < plan.folds.size(); ++f) {
      const auto& fold = plan.folds[f];
      const auto fit_labels = labels_of(data, fold.fit);
      const auto val_labels = labels_of(data, fold.validate);
      const Seed fold_seed = derive_seed(seed, f + 1);

      if (method == Method::rf) {
        for (Index p = 0; p < grid.size(); ++p) {
          const auto forest = fit_forest(data, fold.fit, *grid[p].forest, fold_seed);
          std::vector<int> predicted;
          for (Index r : fold.validate) predicted.push_back(predict_forest(forest, data.row(r)));
          score[p] += accuracy(predicted, val_labels);
        }
        continue;
      }

      Eigen::MatrixXd k_fit, k_val;
      if (method == Method::rfsvm) {
        // The forest sees only the fit portion of the fold.
        const auto forest = fit_forest(data, fold.fit, config.rfsvm_forest, fold_seed);
        auto kt = rf_kernel_train(forest, data, fold.fit);
        require_valid_rf_kernel(kt);
        k_fit = std::move(kt.values);
        k_val = rf_kernel_test(forest, data, fold.validate, fold.fit).values;
      }
      const auto fit_pos = positions_in(sorted_train, fold.fit);
      const auto val_pos = positions_in(sorted_train, fold.validate);

      for (Index p = 0; p < grid.size(); ++p) {
        if (method != Method::rfsvm) {
          const auto& full = full_kernel(grid[p]);
          k_fit = select_block(full, fit_pos, fit_pos);
          k_val = select_block(full, val_pos, fit_pos);
        }
        SvmHyperparams svm_hp = config.svm;
        svm_hp.c = *grid[p].c;
        const auto svm = fit_multiclass(k_fit, fit_labels, svm_hp, fold_seed);
        if (!svm.converged()) {
          note_failure(p, f, "solver did not converge; point scored 0");
          continue;
        }
        score[p] += accuracy(predict(svm, k_val), val_labels);
      }
    }

    const double folds = static_cast<double>(plan.folds.size());
    for (Index p = 0; p < grid.size(); ++p) {
      score[p] = failed[p] ? 0.0 : score[p] / folds;
      if (score[p] > score[best]) best = p;
    }
    result.cv_accuracy = score[best];
  }

  result.model = fit_method(method, data, sorted_train, grid[best], config, derive_seed(seed, 0));
  if (result.model.svm && !result.model.svm->converged())
    result.diagnostics.push_back("final model: solver did not converge (best-so-far model used)");
  return result;
}

// ---------------------------------------------------------------------------

DatasetSummary summarize(const Dataset& d) {
  DatasetSummary s;
  s.name = d.name();
  s.n = d.n();
  s.m = d.m();
  s.c = d.c();
  s.class_counts = d.class_counts();
  s.profile = profile(d);
  return s;
}

Seed split_seed(const ExperimentConfig& config, const std::string& dataset_name) {
  return derive_seed(config.seed, stable_hash(dataset_name));
}

MethodResult run_method_on_dataset(Method method, const Dataset& data,
                                   const ExperimentConfig& config) {
  MethodResult result;
  result.dataset = data.name();
  result.method = method;
  try {
    const auto splits = random_half_splits(data, config.repetitions, split_seed(config, data.name()));
    for (Index r = 0; r < splits.size(); ++r) {
      const auto start = std::chrono::steady_clock::now();
      const Seed seed = derive_seed(splits[r].seed, stable_hash(to_string(method)));
      auto tuned = tune_and_fit(method, data, splits[r].train_indices, config, seed);
      const auto predicted = tuned.model.predict(data, splits[r].test_indices);
      const auto actual = labels_of(data, splits[r].test_indices);
      const double acc = accuracy(predicted, actual);
      const double f1 = micro_f1(predicted, actual, data.c());
      if (std::abs(acc - f1) > 1e-12)
        throw Error("micro-F1 differs from accuracy on a single-label prediction");
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

      result.accuracies.push_back(acc);
      result.micro_f1s.push_back(f1);
      result.hyperparams.push_back(tuned.model.hyperparams.to_string());
      result.cv_accuracies.push_back(tuned.cv_accuracy);
      result.seconds.push_back(elapsed.count());
      for (const auto& d : tuned.diagnostics)
        result.diagnostics.push_back("rep " + std::to_string(r) + ": " + d);
    }
    const double n = static_cast<double>(result.accuracies.size());
    result.mean_accuracy = std::accumulate(result.accuracies.begin(), result.accuracies.end(), 0.0) / n;
    double var = 0.0;
    for (double a : result.accuracies) var += (a - result.mean_accuracy) * (a - result.mean_accuracy);
    result.std_accuracy = std::sqrt(var / n);
  } catch (const std::exception& e) {
    result.ok = false;
    result.diagnostics.push_back(std::string("aborted: ") + e.what());
    std::cerr << "warning: " << to_string(method) << " on " << data.name()
              << " failed: " << e.what() << '\n';
  }
  return result;
}

ExperimentResults run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentResults out;
  for (const auto& spec : config.datasets) {
    auto loaded = load_csv(spec.path, spec.label_column);
    const Dataset data = spec.name.empty()
                             ? std::move(loaded)
                             : Dataset(spec.name, loaded.features(), loaded.labels(), loaded.class_names());
    out.datasets.push_back(summarize(data));
    for (Method method : config.methods) out.results.push_back(run_method_on_dataset(method, data, config));
  }
  return out;
}

namespace {

json optional_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string results_to_json(const ExperimentResults& results) {
  json out;
  auto& datasets = out["datasets"] = json::array();
  for (const auto& d : results.datasets) {
    datasets.push_back({{"name", d.name},
                        {"n", d.n},
                        {"m", d.m},
                        {"c", d.c},
                        {"class_counts", d.class_counts},
                        {"omega", d.profile.omega},
                        {"imbalance_ratio", d.profile.imbalance_ratio},
                        {"band", to_string(d.profile.band)}});
  }
  auto& list = out["results"] = json::array();
  for (const auto& r : results.results) {
    json cv = json::array();
    for (const auto& v : r.cv_accuracies) cv.push_back(optional_to_json(v));
    list.push_back({{"dataset", r.dataset},
                    {"method", to_string(r.method)},
                    {"ok", r.ok},
                    {"accuracies", r.accuracies},
                    {"micro_f1s", r.micro_f1s},
                    {"hyperparams", r.hyperparams},
                    {"cv_accuracies", cv},
                    {"mean_accuracy", r.mean_accuracy},
                    {"std_accuracy", r.std_accuracy},
                    {"diagnostics", r.diagnostics}});
  }
  return out.dump(1);
}

ExperimentResults results_from_json(const std::string& text) {
  ExperimentResults results;
  try {
    const auto in = json::parse(text);
    for (const auto& d : in.at("datasets")) {
      DatasetSummary s;
      s.name = d.at("name").get<std::string>();
      s.n = d.at("n").get<Index>();
      s.m = d.at("m").get<Index>();
      s.c = d.at("c").get<Index>();
      s.class_counts = d.at("class_counts").get<std::vector<Index>>();
      s.profile.omega = d.at("omega").get<double>();
      s.profile.imbalance_ratio = d.at("imbalance_ratio").get<double>();
      s.profile.band = band_of(s.profile.omega);
      results.datasets.push_back(std::move(s));
    }
    for (const auto& r : in.at("results")) {
      MethodResult m;
      m.dataset = r.at("dataset").get<std::string>();
      m.method = method_from_string(r.at("method").get<std::string>());
      m.ok = r.at("ok").get<bool>();
      m.accuracies = r.at("accuracies").get<std::vector<double>>();
      m.micro_f1s = r.at("micro_f1s").get<std::vector<double>>();
      m.hyperparams = r.at("hyperparams").get<std::vector<std::string>>();
      for (const auto& v : r.at("cv_accuracies"))
        m.cv_accuracies.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
      m.mean_accuracy = r.at("mean_accuracy").get<double>();
      m.std_accuracy = r.at("std_accuracy").get<double>();
      m.diagnostics = r.at("diagnostics").get<std::vector<std::string>>();
      results.results.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed results file: ") + e.what());
  }
  return results;
}

// ---------------------------------------------------------------------------

namespace {

SubReport build_subreport(const std::string& scope, const std::vector<std::string>& methods,
                          const std::vector<std::string>& datasets,
                          const std::map<std::pair<std::string, std::string>, double>& cell,
                          const ReportOptions& options) {
  SubReport sub;
  sub.scope = scope;
  sub.table.methods = methods;
  sub.table.datasets = datasets;
  const Index k = methods.size();
  const Index n = datasets.size();
  sub.table.scores.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (Index d = 0; d < n; ++d)
    for (Index j = 0; j < k; ++j)
      sub.table.scores(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) =
          cell.at({datasets[d], methods[j]});

  sub.wins.assign(k, 0);
  for (Index d = 0; d < n; ++d) {
    const double top = sub.table.scores.row(static_cast<Eigen::Index>(d)).maxCoeff();
    for (Index j = 0; j < k; ++j)
      if (sub.table.scores(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) == top) ++sub.wins[j];
  }

  if (k >= 3 && n >= 2) {
    sub.friedman = friedman_nemenyi(sub.table, options.alpha);
  } else {
    sub.notes.push_back("friedman/nemenyi skipped: needs >= 3 methods and >= 2 datasets (have " +
                        std::to_string(k) + ", " + std::to_string(n) + ")");
  }

  if (n == 0) {
    sub.notes.push_back("bayesian sign test skipped: no datasets");
    return sub;
  }
  for (double rope : options.ropes) {
    BayesMatrix bm;
    bm.rope = rope;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    bm.p_a_gt_b = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k), nan);
    bm.p_rope = bm.p_a_gt_b;
    for (Index a = 0; a < k; ++a) {
      for (Index b = 0; b < k; ++b) {
        if (a == b) continue;
        std::vector<double> sa(n), sb(n);
        for (Index d = 0; d < n; ++d) {
          sa[d] = sub.table.scores(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(a));
          sb[d] = sub.table.scores(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(b));
        }
        const Seed seed = derive_seed(options.seed, stable_hash(scope + "|" + methods[a] + "|" +
                                                                methods[b] + "|" + format_double(rope)));
        const auto br = bayesian_sign_test(sa, sb, rope, options.samples, seed);
        bm.p_a_gt_b(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = br.p_a_gt_b;
        bm.p_rope(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = br.p_rope;
      }
    }
    sub.bayes.push_back(std::move(bm));
  }
  return sub;
}

}  // namespace

Report assemble_report(const ExperimentResults& results, const ReportOptions& options) {
  std::vector<std::string> methods;
  std::map<std::pair<std::string, std::string>, const MethodResult*> by_cell;
  for (const auto& r : results.results) {
    const std::string m = to_string(r.method);
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
    by_cell[{r.dataset, m}] = &r;
  }

  Report report;
  std::map<std::pair<std::string, std::string>, double> cell;
  std::vector<const DatasetSummary*> included;
  for (const auto& d : results.datasets) {
    bool usable = true;
    for (const auto& m : methods) {
      const auto it = by_cell.find({d.name, m});
      if (it == by_cell.end()) throw Error("report: missing result for " + d.name + " / " + m);
      if (!it->second->ok) usable = false;
      cell[{d.name, m}] = it->second->mean_accuracy;
    }
    if (usable) {
      included.push_back(&d);
    } else {
      report.excluded_datasets.push_back(d.name);
      report.warnings.push_back("dataset '" + d.name +
                                "' has an absent cell and is excluded from rank-based reports");
      std::cerr << "WARNING: " << report.warnings.back() << '\n';
    }
  }

  std::vector<std::string> all_names;
  for (const auto* d : included) all_names.push_back(d->name);
  report.global = build_subreport("all", methods, all_names, cell, options);

  for (HdlssBand band : {HdlssBand::very_hdlss, HdlssBand::mid_hdlss, HdlssBand::non_hdlss}) {
    std::vector<std::string> names;
    for (const auto* d : included)
      if (d->profile.band == band) names.push_back(d->name);
    report.bands.push_back(build_subreport(to_string(band), methods, names, cell, options));
  }
  return report;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      row.push_back(std::isnan(m(i, j)) ? json(nullptr) : json(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

json subreport_to_json(const SubReport& sub) {
  json out;
  out["scope"] = sub.scope;
  out["methods"] = sub.table.methods;
  out["datasets"] = sub.table.datasets;
  out["scores"] = matrix_to_json(sub.table.scores);
  out["wins"] = sub.wins;
  out["notes"] = sub.notes;
  if (sub.friedman) {
    const auto& f = *sub.friedman;
    json groups = json::array();
    for (const auto& g : f.groups) {
      std::vector<std::string> names;
      for (Index j : g) names.push_back(sub.table.methods[j]);
      groups.push_back(names);
    }
    out["friedman"] = {{"avg_ranks", f.avg_ranks},
                       {"statistic", f.statistic},
                       {"p_value", f.p_value},
                       {"iman_davenport", std::isfinite(f.iman_davenport) ? json(f.iman_davenport) : json(nullptr)},
                       {"iman_davenport_p", f.iman_davenport_p},
                       {"alpha", f.alpha},
                       {"q_alpha", f.q_alpha},
                       {"cd", f.cd},
                       {"groups", groups}};
  } else {
    out["friedman"] = nullptr;
  }
  json bayes = json::array();
  for (const auto& b : sub.bayes)
    bayes.push_back({{"rope", b.rope}, {"p_a_gt_b", matrix_to_json(b.p_a_gt_b)},
                     {"p_rope", matrix_to_json(b.p_rope)}});
  out["bayes"] = bayes;
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

}  // namespace

std::string report_to_json(const Report& report) {
  json out;
  out["header"] = {
      {"std_convention", "population standard deviation over repetitions"},
      {"reproducibility",
       "byte-identical for a fixed master seed on the same platform and build; "
       "floating-point results may differ across compilers, libm versions or CPU features"}};
  out["global"] = subreport_to_json(report.global);
  json bands = json::array();
  for (const auto& b : report.bands) bands.push_back(subreport_to_json(b));
  out["bands"] = bands;
  out["excluded_datasets"] = report.excluded_datasets;
  out["warnings"] = report.warnings;
  return out.dump(2);
}

void write_report_bundle(const ExperimentResults& results, const Report& report,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "results.json", results_to_json(results));
  write_text(dir / "report.json", report_to_json(report));

  std::map<std::string, const DatasetSummary*> summaries;
  for (const auto& d : results.datasets) summaries[d.name] = &d;

  std::vector<std::string> methods;
  for (const auto& r : results.results) {
    const std::string m = to_string(r.method);
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
  }

  {
    std::ostringstream scores;
    scores << "dataset,omega,band";
    for (const auto& m : methods) scores << ',' << m << "_mean," << m << "_std";
    scores << '\n';
    for (const auto& d : results.datasets) {
      scores << csv_field(d.name) << ',' << format_double(d.profile.omega) << ','
             << to_string(d.profile.band);
      for (const auto& m : methods) {
        const auto it = std::find_if(results.results.begin(), results.results.end(), [&](const auto& r) {
          return r.dataset == d.name && to_string(r.method) == m;
        });
        if (it == results.results.end() || !it->ok) scores << ",absent,absent";
        else scores << ',' << format_double(it->mean_accuracy) << ',' << format_double(it->std_accuracy);
      }
      scores << '\n';
    }
    write_text(dir / "scores.csv", scores.str());
  }

  std::ostringstream timings;
  timings << "dataset,method,repetition,seconds\n";
  for (const auto& m : methods) {
    std::ostringstream table;
    table << "dataset,repetition,accuracy,micro_f1,cv_accuracy,hyperparams\n";
    for (const auto& r : results.results) {
      if (to_string(r.method) != m) continue;
      if (!r.ok) {
        table << csv_field(r.dataset) << ",absent,,,,"
              << csv_field(r.diagnostics.empty() ? "" : r.diagnostics.back()) << '\n';
        continue;
      }
      for (Index i = 0; i < r.accuracies.size(); ++i) {
        table << csv_field(r.dataset) << ',' << i << ',' << format_double(r.accuracies[i]) << ','
              << format_double(r.micro_f1s[i]) << ','
              << (r.cv_accuracies[i] ? format_double(*r.cv_accuracies[i]) : std::string()) << ','
              << csv_field(r.hyperparams[i]) << '\n';
        if (i < r.seconds.size())
          timings << csv_field(r.dataset) << ',' << m << ',' << i << ',' << format_double(r.seconds[i]) << '\n';
      }
    }
    write_text(dir / ("results_" + m + ".csv"), table.str());
  }
  // Wall-clock lives only here so every other file is reproducible; results
  // reloaded from disk carry no timings and leave an existing file alone.
  const bool timed = std::any_of(results.results.begin(), results.results.end(),
                                 [](const auto& r) { return !r.seconds.empty(); });
  if (timed) write_text(dir / "timings.csv", timings.str());

  std::vector<const SubReport*> subs{&report.global};
  for (const auto& b : report.bands) subs.push_back(&b);
  for (const auto* sub : subs) {
    if (sub->friedman)
      write_text(dir / ("cd_" + sub->scope + ".json"), cd_diagram_json(sub->table, *sub->friedman));
    for (const auto& b : sub->bayes) {
      std::ostringstream csv;
      csv << "a\\b";
      for (const auto& m : sub->table.methods) csv << ',' << m;
      csv << '\n';
      for (Index a = 0; a < sub->table.k(); ++a) {
        csv << sub->table.methods[a];
        for (Index c = 0; c < sub->table.k(); ++c)
          csv << ',' << format_double(b.p_a_gt_b(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)));
        csv << '\n';
      }
      write_text(dir / ("bayes_" + sub->scope + "_rope_" + format_double(b.rope) + ".csv"), csv.str());
    }
  }
}

}  // namespace rfsvm
