#include "rfsvm/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace rfsvm {

Dataset::Dataset(std::string name, FeatureMatrix features, std::vector<int> labels,
                 std::vector<std::string> class_names)
    : name_(std::move(name)),
      features_(std::move(features)),
      labels_(std::move(labels)),
      class_names_(std::move(class_names)) {
  if (static_cast<Index>(features_.rows()) != labels_.size())
    throw Error("dataset '" + name_ + "': feature rows and labels differ in length");
  if (!features_.allFinite()) throw Error("dataset '" + name_ + "': non-finite feature");

  const Index c = class_names_.size();
  class_counts_.assign(c, 0);
  for (int y : labels_) {
    if (y < 0 || static_cast<Index>(y) >= c)
      throw Error("dataset '" + name_ + "': label id out of range");
    ++class_counts_[static_cast<Index>(y)];
  }
  for (Index j = 0; j < c; ++j) {
    if (class_counts_[j] == 0)
      throw Error("dataset '" + name_ + "': class '" + class_names_[j] + "' has no instances");
  }
}

std::vector<std::string> Dataset::decode(std::span<const int> encoded) const {
  std::vector<std::string> out;
  out.reserve(encoded.size());
  for (int y : encoded) out.push_back(class_names_.at(static_cast<Index>(y)));
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const LabelColumn& label_column) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error("empty dataset file: " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_line(line);
  const Index width = header.size();

  Index label_pos = 0;
  if (const auto* name = std::get_if<std::string>(&label_column)) {
    const auto it = std::find(header.begin(), header.end(), std::string_view(*name));
    if (it == header.end()) throw Error("label column '" + *name + "' not found in header");
    label_pos = static_cast<Index>(it - header.begin());
  } else {
    label_pos = std::get<Index>(label_column);
    if (label_pos >= width) throw Error("label column index out of range");
  }
  if (width < 2) throw Error("dataset needs at least one feature column");

  std::vector<double> values;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::map<std::string, int, std::less<>> class_ids;

  Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != width)
      throw Error("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                  " cells, got " + std::to_string(cells.size()));
    for (Index col = 0; col < width; ++col) {
      const auto cell = cells[col];
      if (col == label_pos) {
        auto it = class_ids.find(cell);
        if (it == class_ids.end()) {
          it = class_ids.emplace(std::string(cell), static_cast<int>(class_names.size())).first;
          class_names.emplace_back(cell);
        }
        labels.push_back(it->second);
        continue;
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
        throw Error("line " + std::to_string(line_no) + ": non-numeric feature '" +
                    std::string(cell) + "'");
      if (!std::isfinite(v))
        throw Error("line " + std::to_string(line_no) + ": non-finite feature");
      values.push_back(v);
    }
  }

  if (class_names.size() < 2)
    throw Error("dataset '" + path.filename().string() +
                "' has a single class; unusable for classification");

  const Index n = labels.size();
  const Index m = width - 1;
  FeatureMatrix features = Eigen::Map<FeatureMatrix>(values.data(),
                                                     static_cast<Eigen::Index>(n),
                                                     static_cast<Eigen::Index>(m));
  return Dataset(path.stem().string(), std::move(features), std::move(labels),
                 std::move(class_names));
}

void save_csv(const Dataset& d, const std::filesystem::path& path,
              const std::string& label_header) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (Index j = 0; j < d.m(); ++j) out << 'f' << j << ',';
  out << label_header << '\n';
  char buffer[32];
  for (Index i = 0; i < d.n(); ++i) {
    for (double v : d.row(i)) {
      const auto res = std::to_chars(buffer, buffer + sizeof(buffer), v);
      out.write(buffer, res.ptr - buffer);
      out << ',';
    }
    out << d.class_names()[static_cast<Index>(d.label(i))] << '\n';
  }
}

// ---------------------------------------------------------------------------

double omega(std::span<const Index> class_counts, Index m) {
  if (class_counts.empty() || m == 0) throw Error("omega: empty dataset");
  const double total = static_cast<double>(
      std::accumulate(class_counts.begin(), class_counts.end(), Index{0}));
  return (1.0 / static_cast<double>(m)) * (total / static_cast<double>(class_counts.size()));
}

double omega(const Dataset& d) { return omega(d.class_counts(), d.m()); }

double imbalance_ratio(std::span<const Index> class_counts) {
  if (class_counts.size() < 2) throw Error("imbalance ratio needs at least two classes");
  const auto [lo, hi] = std::minmax_element(class_counts.begin(), class_counts.end());
  if (*lo == 0) throw Error("imbalance ratio: empty class");
  return static_cast<double>(*hi) / static_cast<double>(*lo);
}

double imbalance_ratio(const Dataset& d) { return imbalance_ratio(d.class_counts()); }

HdlssBand band_of(double omega_value) noexcept {
  if (omega_value < 0.015) return HdlssBand::very_hdlss;
  if (omega_value < 1.0) return HdlssBand::mid_hdlss;
  return HdlssBand::non_hdlss;
}

const char* to_string(HdlssBand band) noexcept {
  switch (band) {
    case HdlssBand::very_hdlss: return "very_hdlss";
    case HdlssBand::mid_hdlss: return "mid_hdlss";
    case HdlssBand::non_hdlss: return "non_hdlss";
  }
  return "unknown";
}

HdlssProfile profile(const Dataset& d) {
  HdlssProfile p;
  p.omega = omega(d);
  p.imbalance_ratio = imbalance_ratio(d);
  p.band = band_of(p.omega);
  return p;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<IndexList> members_by_class(const Dataset& d) {
  std::vector<IndexList> members(d.c());
  for (Index i = 0; i < d.n(); ++i) members[static_cast<Index>(d.label(i))].push_back(i);
  return members;
}

}  // namespace

std::vector<SplitPlan> random_half_splits(const Dataset& d, Index repetitions, Seed seed) {
  if (d.n() < 2 * d.c()) throw Error("random_half_splits: need n >= 2c");
  for (Index j = 0; j < d.c(); ++j) {
    if (d.class_counts()[j] < 2)
      throw Error("random_half_splits: class '" + d.class_names()[j] +
                  "' has a single instance and cannot be stratified");
  }

  const auto members = members_by_class(d);
  std::vector<SplitPlan> plans;
  plans.reserve(repetitions);
  for (Index r = 0; r < repetitions; ++r) {
    SplitPlan plan;
    plan.seed = derive_seed(seed, r);
    Rng rng(plan.seed);

    // Odd-sized classes share the extra ceil(n/2) - sum(floor(n_j/2)) slots.
    IndexList odd;
    for (Index j = 0; j < d.c(); ++j)
      if (members[j].size() % 2 == 1) odd.push_back(j);
    shuffle(odd, rng);
    std::vector<bool> gets_extra(d.c(), false);
    for (Index t = 0; t < (odd.size() + 1) / 2; ++t) gets_extra[odd[t]] = true;

    for (Index j = 0; j < d.c(); ++j) {
      IndexList shuffled = members[j];
      shuffle(shuffled, rng);
      const Index take = shuffled.size() / 2 + (gets_extra[j] ? 1 : 0);
      plan.train_indices.insert(plan.train_indices.end(), shuffled.begin(),
                                shuffled.begin() + static_cast<std::ptrdiff_t>(take));
      plan.test_indices.insert(plan.test_indices.end(),
                               shuffled.begin() + static_cast<std::ptrdiff_t>(take),
                               shuffled.end());
    }
    std::sort(plan.train_indices.begin(), plan.train_indices.end());
    std::sort(plan.test_indices.begin(), plan.test_indices.end());
    plans.push_back(std::move(plan));
  }
  return plans;
}

FoldPlan kfold_indices(std::span<const Index> train, std::span<const int> labels, Index k,
                       Seed seed) {
  if (k < 2) throw Error("kfold_indices: k must be at least 2");
  if (k > train.size()) throw Error("kfold_indices: k exceeds the training-set size");

  std::map<int, IndexList> by_class;
  for (Index idx : train) {
    if (idx >= labels.size()) throw Error("kfold_indices: index outside label range");
    by_class[labels[idx]].push_back(idx);
  }

  Rng rng(seed);
  FoldPlan plan;
  plan.folds.resize(k);
  Index position = 0;
  for (auto& [label, members] : by_class) {
    if (members.size() < k)
      plan.warnings.push_back("class " + std::to_string(label) + " has " +
                              std::to_string(members.size()) + " members for " +
                              std::to_string(k) + " folds");
    shuffle(members, rng);
    for (Index idx : members) plan.folds[position++ % k].validate.push_back(idx);
  }

  for (auto& fold : plan.folds) {
    std::sort(fold.validate.begin(), fold.validate.end());
    for (Index idx : train) {
      if (!std::binary_search(fold.validate.begin(), fold.validate.end(), idx))
        fold.fit.push_back(idx);
    }
    std::sort(fold.fit.begin(), fold.fit.end());
  }
  return plan;
}

std::string splits_to_json(std::span<const SplitPlan> splits) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : splits)
    out.push_back({{"seed", s.seed}, {"train", s.train_indices}, {"test", s.test_indices}});
  return out.dump(1);
}

std::vector<SplitPlan> splits_from_json(const std::string& text) {
  std::vector<SplitPlan> splits;
  try {
    for (const auto& item : nlohmann::json::parse(text)) {
      SplitPlan s;
      s.seed = item.at("seed").get<Seed>();
      s.train_indices = item.at("train").get<IndexList>();
      s.test_indices = item.at("test").get<IndexList>();
      splits.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed split manifest: ") + e.what());
  }
  return splits;
}

}  // namespace rfsvm
