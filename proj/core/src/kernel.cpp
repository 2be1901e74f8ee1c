#include "rfsvm/kernel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace rfsvm {

const char* to_string(KernelKind kind) noexcept {
  switch (kind) {
    case KernelKind::rf: return "rf";
    case KernelKind::cosine: return "cosine";
    case KernelKind::rbf: return "rbf";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "rf") return KernelKind::rf;
  if (name == "cosine") return KernelKind::cosine;
  if (name == "rbf") return KernelKind::rbf;
  throw Error("unknown kernel kind '" + name + "'");
}

double rf_similarity(const ForestModel& model, std::span<const double> a,
                     std::span<const double> b) {
  model.check_dimension(a);
  model.check_dimension(b);
  if (model.size() == 0) throw Error("rf_similarity: empty forest");
  Index same = 0;
  for (const auto& tree : model.trees()) same += tree.leaf_of(a) == tree.leaf_of(b) ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(model.size());
}

namespace {

using LeafTable = Eigen::Matrix<std::uint32_t, Eigen::Dynamic, Eigen::Dynamic>;

// leaves(i, k) = leaf of instance ids[i] in tree k.
LeafTable leaf_table(const ForestModel& model, const Dataset& data, std::span<const Index> ids) {
  for (Index id : ids) {
    if (id >= data.n()) throw Error("kernel: instance index out of range");
  }
  if (data.m() != model.n_features())
    throw Error("kernel: dataset and forest disagree on the feature count");
  LeafTable leaves(static_cast<Eigen::Index>(ids.size()),
                   static_cast<Eigen::Index>(model.size()));
  parallel_for(model.size(), [&](Index k) {
    const auto& tree = model.trees()[k];
    for (Index i = 0; i < ids.size(); ++i)
      leaves(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          tree.leaf_of(data.row(ids[i]));
  });
  return leaves;
}

std::vector<IndexList> buckets_for_tree(const LeafTable& leaves, Index k, Index n_leaves) {
  std::vector<IndexList> buckets(n_leaves);
  for (Eigen::Index i = 0; i < leaves.rows(); ++i)
    buckets[leaves(i, static_cast<Eigen::Index>(k))].push_back(static_cast<Index>(i));
  return buckets;
}

}  // namespace

KernelMatrix rf_kernel_train(const ForestModel& model, const Dataset& data,
                             std::span<const Index> train) {
  if (model.size() == 0) throw Error("rf_kernel_train: empty forest");
  const auto leaves = leaf_table(model, data, train);
  const auto n = static_cast<Eigen::Index>(train.size());

  LeafTable counts = LeafTable::Zero(n, n);
  for (Index k = 0; k < model.size(); ++k) {
    for (const auto& bucket : buckets_for_tree(leaves, k, model.trees()[k].n_leaves())) {
      for (Index a : bucket)
        for (Index b : bucket) ++counts(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  }

  KernelMatrix out;
  out.kind = KernelKind::rf;
  out.symmetric = true;
  out.row_ids.assign(train.begin(), train.end());
  out.col_ids = out.row_ids;
  out.values = counts.cast<double>() / static_cast<double>(model.size());
  return out;
}

KernelMatrix rf_kernel_test(const ForestModel& model, const Dataset& data,
                            std::span<const Index> test, std::span<const Index> train) {
  if (model.size() == 0) throw Error("rf_kernel_test: empty forest");
  const auto train_leaves = leaf_table(model, data, train);
  const auto test_leaves = leaf_table(model, data, test);

  LeafTable counts = LeafTable::Zero(static_cast<Eigen::Index>(test.size()),
                                     static_cast<Eigen::Index>(train.size()));
  for (Index k = 0; k < model.size(); ++k) {
    const auto buckets = buckets_for_tree(train_leaves, k, model.trees()[k].n_leaves());
    for (Eigen::Index t = 0; t < test_leaves.rows(); ++t) {
      for (Index j : buckets[test_leaves(t, static_cast<Eigen::Index>(k))])
        ++counts(t, static_cast<Eigen::Index>(j));
    }
  }

  KernelMatrix out;
  out.kind = KernelKind::rf;
  out.symmetric = false;
  out.row_ids.assign(test.begin(), test.end());
  out.col_ids.assign(train.begin(), train.end());
  out.values = counts.cast<double>() / static_cast<double>(model.size());
  return out;
}

namespace {

template <typename Entry>
KernelMatrix pairwise_kernel(const Dataset& data, std::span<const Index> rows,
                             std::span<const Index> cols, KernelKind kind, Entry entry) {
  for (Index id : rows)
    if (id >= data.n()) throw Error("kernel: row index out of range");
  for (Index id : cols)
    if (id >= data.n()) throw Error("kernel: column index out of range");

  KernelMatrix out;
  out.kind = kind;
  out.row_ids.assign(rows.begin(), rows.end());
  out.col_ids.assign(cols.begin(), cols.end());
  out.symmetric = out.row_ids == out.col_ids;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  parallel_for(rows.size(), [&](Index i) {
    for (Index j = 0; j < cols.size(); ++j) {
      if (out.symmetric && j < i) continue;
      const double v = entry(rows[i], cols[j]);
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  });
  if (out.symmetric) {
    for (Eigen::Index i = 0; i < out.values.rows(); ++i)
      for (Eigen::Index j = 0; j < i; ++j) out.values(i, j) = out.values(j, i);
  }
  return out;
}

}  // namespace

KernelMatrix cosine_kernel(const Dataset& data, std::span<const Index> rows,
                           std::span<const Index> cols) {
  const auto& x = data.features();
  std::vector<double> norms(data.n(), -1.0);
  auto norm_of = [&](Index id) {
    if (norms[id] < 0.0) {
      norms[id] = x.row(static_cast<Eigen::Index>(id)).norm();
      if (norms[id] == 0.0)
        throw Error("cosine kernel: instance " + std::to_string(id) + " has zero norm");
    }
  };
  for (Index id : rows) if (id < data.n()) norm_of(id);
  for (Index id : cols) if (id < data.n()) norm_of(id);

  return pairwise_kernel(data, rows, cols, KernelKind::cosine, [&](Index a, Index b) {
    if (a == b) return 1.0;
    const double dot = x.row(static_cast<Eigen::Index>(a)).dot(x.row(static_cast<Eigen::Index>(b)));
    const double cos = std::clamp(dot / (norms[a] * norms[b]), -1.0, 1.0);
    return (1.0 + cos) / 2.0;
  });
}

KernelMatrix rbf_kernel(const Dataset& data, std::span<const Index> rows,
                        std::span<const Index> cols, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw Error("rbf kernel: gamma must be positive");
  const auto& x = data.features();
  return pairwise_kernel(data, rows, cols, KernelKind::rbf, [&](Index a, Index b) {
    const double sq =
        (x.row(static_cast<Eigen::Index>(a)) - x.row(static_cast<Eigen::Index>(b))).squaredNorm();
    return std::exp(-gamma * sq);
  });
}

KernelValidation validate_kernel(const Eigen::MatrixXd& values, double tolerance) {
  if (values.rows() != values.cols()) throw Error("validate_kernel: matrix is not square");
  KernelValidation report;
  if (values.size() == 0) {
    report.symmetric = report.positive_semidefinite = report.unit_diagonal = true;
    return report;
  }
  report.max_asymmetry = (values - values.transpose()).cwiseAbs().maxCoeff();
  report.max_diagonal_deviation = (values.diagonal().array() - 1.0).abs().maxCoeff();
  const Eigen::MatrixXd sym = (values + values.transpose()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("validate_kernel: eigensolver failed");
  report.min_eigenvalue = solver.eigenvalues().minCoeff();
  report.symmetric = report.max_asymmetry <= tolerance;
  report.positive_semidefinite = report.min_eigenvalue >= -tolerance;
  report.unit_diagonal = report.max_diagonal_deviation <= tolerance;
  return report;
}

KernelValidation validate_kernel(const KernelMatrix& k, double tolerance) {
  return validate_kernel(k.values, tolerance);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'F', 'S', 'V', 'M', 'K', 'M', '1'};

static_assert(std::endian::native == std::endian::little,
              "kernel cache format assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error("kernel file truncated");
  return v;
}

}  // namespace

void write_kernel(const KernelMatrix& k, const std::filesystem::path& path) {
  if (k.row_ids.size() != k.rows() || k.col_ids.size() != k.cols())
    throw Error("write_kernel: id lists do not match the matrix shape");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, static_cast<std::uint8_t>(k.kind));
  put(out, static_cast<std::uint8_t>(k.symmetric ? 1 : 0));
  put(out, std::uint16_t{0});
  put(out, static_cast<std::uint64_t>(k.rows()));
  put(out, static_cast<std::uint64_t>(k.cols()));
  for (Index id : k.row_ids) put(out, static_cast<std::uint64_t>(id));
  for (Index id : k.col_ids) put(out, static_cast<std::uint64_t>(id));
  for (Eigen::Index i = 0; i < k.values.rows(); ++i)
    for (Eigen::Index j = 0; j < k.values.cols(); ++j) put(out, k.values(i, j));
  if (!out) throw Error("failed writing " + path.string());
}

KernelMatrix read_kernel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error("not a kernel file: " + path.string());
  KernelMatrix k;
  const auto kind = get<std::uint8_t>(in);
  if (kind > 2) throw Error("kernel file: unknown kind");
  k.kind = static_cast<KernelKind>(kind);
  k.symmetric = get<std::uint8_t>(in) != 0;
  get<std::uint16_t>(in);
  const auto rows = get<std::uint64_t>(in);
  const auto cols = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < rows; ++i) k.row_ids.push_back(get<std::uint64_t>(in));
  for (std::uint64_t j = 0; j < cols; ++j) k.col_ids.push_back(get<std::uint64_t>(in));
  k.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < k.values.rows(); ++i)
    for (Eigen::Index j = 0; j < k.values.cols(); ++j) k.values(i, j) = get<double>(in);
  return k;
}

}  // namespace rfsvm
