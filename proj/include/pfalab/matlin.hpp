#ifndef PFALAB_MATLIN_HPP
#define PFALAB_MATLIN_HPP

#include <cstddef>
#include <vector>

#include "pfalab/rng.hpp"

namespace pfalab::matlin {

// Dense row-major matrix of doubles.  Minimal on purpose: the eigensolver and
// the generators below are the only heavy consumers.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row_ptr(std::size_t i) { return data_.data() + i * cols_; }
  const double* row_ptr(std::size_t i) const { return data_.data() + i * cols_; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  Matrix transposed() const;

  // Largest |a_ij - b_ij|; matrices must have equal shape.
  static double max_abs_diff(const Matrix& a, const Matrix& b);
  // Largest |a_ij - a_ji|.
  double max_asymmetry() const;
  // Largest off-diagonal magnitude (square matrices).
  double max_off_diagonal() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix multiply(const Matrix& a, const Matrix& b);

// a * diag(d) * a^T accumulated on the upper triangle and mirrored, so the
// result is symmetric to the last bit.
Matrix scaled_gram(const Matrix& a, const std::vector<double>& d);

// Symmetric positive semidefinite matrix with trace approximately equal to its
// dimension.  Unit diagonal is tracked but not required: several generator
// families are standardized only in aggregate (trace = dim) while individual
// diagonal entries differ from one; all downstream probability computations
// use the actual diagonal.
struct CorrelationMatrix {
  std::size_t dim = 0;
  Matrix entries;

  // Structural validation: square, finite, symmetric within tol_sym.
  // Definiteness is established by the eigendecomposition.
  void validate_basic(double tol_sym = 1e-10) const;
  // Full correlation-form validation: basic checks plus unit diagonal within
  // tol_diag and trace within tol_trace of dim.
  void validate_standardized(double tol_sym = 1e-10, double tol_diag = 1e-12,
                             double tol_trace = 1e-8) const;
  bool has_unit_diagonal(double tol = 1e-12) const;
};

// Eigenvalues in descending order with matching eigenvector columns.
struct SpectralDecomposition {
  std::vector<double> eigenvalues;  // lambda_1 >= ... >= lambda_m
  Matrix eigenvectors;              // column j pairs with eigenvalues[j]
};

// Cyclic Jacobi eigendecomposition for symmetric matrices.
// - converges when every off-diagonal magnitude is below 1e-13;
// - eigenvalues in [-1e-8, 0) are clamped to 0, below -1e-8 is an error;
// - each eigenvector is oriented so its largest-magnitude component
//   (first such component on ties) is positive;
// - equal eigenvalues keep the order in which the sweep produced them.
// Throws std::invalid_argument on structurally bad input and
// VerificationError when the matrix is not positive semidefinite or the
// sweeps fail to converge.
SpectralDecomposition eigendecompose(const CorrelationMatrix& sigma);

// Householder reflection I - 2 u u^T for a unit vector (||u|| = 1 within
// 1e-12).  Symmetric, orthogonal, and involutory by construction.
Matrix householder_reflection(const std::vector<double>& u);

// Block-diagonal orthogonal matrix diag{q1, q2}.  Both blocks must be
// orthogonal within 1e-10; entries coupling the blocks are exactly zero.
Matrix block_diag_orthogonal(const Matrix& q1, const Matrix& q2);

// Haar-like random orthogonal matrix: Gaussian sample, then two passes of
// modified Gram-Schmidt.  Deterministic for a fixed rng state.
Matrix random_orthogonal(std::size_t dim, Rng& rng);

// Max deviation of q^T q from the identity; 0 for a perfectly orthogonal q.
double orthogonality_defect(const Matrix& q);

}  // namespace pfalab::matlin

#endif  // PFALAB_MATLIN_HPP
