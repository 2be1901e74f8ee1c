#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <string>

#include "rfsvm/common.hpp"
#include "rfsvm/data.hpp"
#include "rfsvm/forest.hpp"

namespace rfsvm {

enum class KernelKind : std::uint8_t { rf = 0, cosine = 1, rbf = 2 };

const char* to_string(KernelKind kind) noexcept;
KernelKind kernel_kind_from_string(const std::string& name);

/// Dense Gram matrix (rows == cols, symmetric) or a rectangular
/// test-by-train block. row_ids / col_ids are dataset row indices.
struct KernelMatrix {
  Eigen::MatrixXd values;
  KernelKind kind = KernelKind::rf;
  IndexList row_ids;
  IndexList col_ids;
  bool symmetric = false;

  Index rows() const noexcept { return static_cast<Index>(values.rows()); }
  Index cols() const noexcept { return static_cast<Index>(values.cols()); }
};

/// Fraction of trees in which a and b reach the same leaf.
double rf_similarity(const ForestModel& model, std::span<const double> a,
                     std::span<const double> b);

/// Symmetric |train| x |train| RF kernel. Assembled by grouping the training
/// instances by leaf in each tree and counting co-occurrences within each
/// bucket, then dividing the integer counts by M.
KernelMatrix rf_kernel_train(const ForestModel& model, const Dataset& data,
                             std::span<const Index> train);

/// |test| x |train| RF kernel rows s_H(x_test, x_train).
KernelMatrix rf_kernel_test(const ForestModel& model, const Dataset& data,
                            std::span<const Index> test, std::span<const Index> train);

/// (1 + cos(x_i, x_j)) / 2. Throws Error on a zero-norm vector.
KernelMatrix cosine_kernel(const Dataset& data, std::span<const Index> rows,
                           std::span<const Index> cols);

/// exp(-gamma * |x_i - x_j|^2). Throws Error unless gamma > 0.
KernelMatrix rbf_kernel(const Dataset& data, std::span<const Index> rows,
                        std::span<const Index> cols, double gamma);

struct KernelValidation {
  double max_asymmetry = 0.0;
  double min_eigenvalue = 0.0;
  double max_diagonal_deviation = 0.0;  // max |K_ii - 1|
  bool symmetric = false;               // max_asymmetry <= tolerance
  bool positive_semidefinite = false;   // min_eigenvalue >= -tolerance
  bool unit_diagonal = false;           // max_diagonal_deviation <= tolerance

  bool ok() const noexcept { return symmetric && positive_semidefinite && unit_diagonal; }
};

/// Symmetry, spectrum (self-adjoint eigensolver on the symmetrized matrix)
/// and diagonal checks. Throws Error on a non-square matrix.
KernelValidation validate_kernel(const KernelMatrix& k, double tolerance = 1e-8);
KernelValidation validate_kernel(const Eigen::MatrixXd& values, double tolerance = 1e-8);

/// Binary cache format, little-endian:
///   char[8] "RFSVMKM1", u8 kind, u8 symmetric, u16 reserved,
///   u64 rows, u64 cols, u64 row_ids[rows], u64 col_ids[cols],
///   f64 values[rows * cols] (row-major).
void write_kernel(const KernelMatrix& k, const std::filesystem::path& path);
KernelMatrix read_kernel(const std::filesystem::path& path);

}  // namespace rfsvm
