#include "pfalab/matlin.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "pfalab/common.hpp"

namespace pfalab::matlin {

namespace {

constexpr double kJacobiOffTol = 1e-13;   // convergence: max |a_pq|, p < q
constexpr double kPsdTol = 1e-8;          // eigenvalues below -kPsdTol are rejected
constexpr int kMaxSweeps = 100;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

double Matrix::max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data_.size(); ++i)
    worst = std::max(worst, std::abs(a.data_[i] - b.data_[i]));
  return worst;
}

double Matrix::max_asymmetry() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = i + 1; j < cols_; ++j)
      worst = std::max(worst, std::abs((*this)(i, j) - (*this)(j, i)));
  return worst;
}

double Matrix::max_off_diagonal() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j)
      if (i != j) worst = std::max(worst, std::abs((*this)(i, j)));
  return worst;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("multiply: inner dimension mismatch");
  Matrix c(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row_ptr(i);
    for (std::size_t l = 0; l < a.cols(); ++l) {
      const double ail = a(i, l);
      if (ail == 0.0) continue;
      const double* bl = b.row_ptr(l);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += ail * bl[j];
    }
  }
  return c;
}

Matrix scaled_gram(const Matrix& a, const std::vector<double>& d) {
  if (a.cols() != d.size()) throw std::invalid_argument("scaled_gram: weight size mismatch");
  const std::size_t n = a.rows(), k = a.cols();
  Matrix c(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.row_ptr(i);
    for (std::size_t j = i; j < n; ++j) {
      const double* aj = a.row_ptr(j);
      KahanSum acc;
      for (std::size_t l = 0; l < k; ++l) acc.add(d[l] * ai[l] * aj[l]);
      const double v = acc.value();
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  return c;
}

void CorrelationMatrix::validate_basic(double tol_sym) const {
  require(dim > 0, "correlation matrix: dimension must be positive");
  require(entries.rows() == dim && entries.cols() == dim,
          "correlation matrix: entries must be dim x dim");
  for (double v : entries.data())
    require(std::isfinite(v), "correlation matrix: entries must be finite");
  const double asym = entries.max_asymmetry();
  if (asym > tol_sym)
    throw std::invalid_argument("correlation matrix: not symmetric (max asymmetry " +
                                std::to_string(asym) + ")");
}

void CorrelationMatrix::validate_standardized(double tol_sym, double tol_diag,
                                              double tol_trace) const {
  validate_basic(tol_sym);
  KahanSum trace;
  for (std::size_t i = 0; i < dim; ++i) {
    require(std::abs(entries(i, i) - 1.0) <= tol_diag,
            "correlation matrix: diagonal entry off unity at index " + std::to_string(i));
    trace.add(entries(i, i));
  }
  require(std::abs(trace.value() - static_cast<double>(dim)) <= tol_trace,
          "correlation matrix: trace differs from dimension");
}

bool CorrelationMatrix::has_unit_diagonal(double tol) const {
  for (std::size_t i = 0; i < dim; ++i)
    if (std::abs(entries(i, i) - 1.0) > tol) return false;
  return true;
}

SpectralDecomposition eigendecompose(const CorrelationMatrix& sigma) {
  sigma.validate_basic(1e-10);
  const std::size_t n = sigma.dim;

  Matrix a = sigma.entries;  // working copy, driven to diagonal form
  Matrix v = Matrix::identity(n);

  int sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::abs(a(p, q)));
    if (off < kJacobiOffTol) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        // Skipping exact zeros both saves work and preserves block structure
        // bit-for-bit: a rotation with apq == 0 is the identity.
        if (std::abs(apq) <= 1e-14) continue;

        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = 1.0 / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;

        for (std::size_t r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = a(r, p);
          const double arq = a(r, q);
          const double np = arp - s * (arq + tau * arp);
          const double nq = arq + s * (arp - tau * arq);
          a(r, p) = np;
          a(p, r) = np;
          a(r, q) = nq;
          a(q, r) = nq;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + tau * vrp);
          v(r, q) = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }
  if (sweep == kMaxSweeps)
    throw VerificationError("eigendecompose: Jacobi sweeps did not converge");

  std::vector<double> lambda(n);
  for (std::size_t i = 0; i < n; ++i) lambda[i] = a(i, i);

  double min_lambda = 0.0;
  for (double l : lambda) min_lambda = std::min(min_lambda, l);
  if (min_lambda < -kPsdTol)
    throw VerificationError("eigendecompose: matrix is not positive semidefinite (min eigenvalue " +
                            std::to_string(min_lambda) + ")");
  for (double& l : lambda)
    if (l < 0.0) l = 0.0;

  // Stable descending sort so exact ties keep sweep order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&lambda](std::size_t x, std::size_t y) { return lambda[x] > lambda[y]; });

  SpectralDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.eigenvalues[j] = lambda[src];
    // Sign convention: first largest-magnitude component positive.
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double mag = std::abs(v(i, src));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    const double flip = (v(arg, src) < 0.0) ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, j) = flip * v(i, src);
  }
  return out;
}

Matrix householder_reflection(const std::vector<double>& u) {
  require(!u.empty(), "householder_reflection: u must be nonempty");
  KahanSum norm2;
  for (double x : u) {
    require(std::isfinite(x), "householder_reflection: u must be finite");
    norm2.add(x * x);
  }
  require(std::abs(norm2.value() - 1.0) <= 1e-12,
          "householder_reflection: u must be a unit vector");
  const std::size_t n = u.size();
  Matrix t(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double two_ui = 2.0 * u[i];
    for (std::size_t j = 0; j < n; ++j) t(i, j) = (i == j ? 1.0 : 0.0) - two_ui * u[j];
  }
  return t;
}

double orthogonality_defect(const Matrix& q) {
  const std::size_t n = q.rows();
  if (n != q.cols()) throw std::invalid_argument("orthogonality_defect: matrix must be square");
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      KahanSum dot;
      for (std::size_t r = 0; r < n; ++r) dot.add(q(r, i) * q(r, j));
      const double target = (i == j) ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(dot.value() - target));
    }
  }
  return worst;
}

Matrix block_diag_orthogonal(const Matrix& q1, const Matrix& q2) {
  require(q1.rows() == q1.cols() && q2.rows() == q2.cols(),
          "block_diag_orthogonal: blocks must be square");
  require(q1.rows() > 0 && q2.rows() > 0, "block_diag_orthogonal: blocks must be nonempty");
  if (orthogonality_defect(q1) > 1e-10 || orthogonality_defect(q2) > 1e-10)
    throw std::invalid_argument("block_diag_orthogonal: blocks must be orthogonal within 1e-10");
  const std::size_t k = q1.rows(), n = k + q2.rows();
  Matrix t(n, n, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) t(i, j) = q1(i, j);
  for (std::size_t i = k; i < n; ++i)
    for (std::size_t j = k; j < n; ++j) t(i, j) = q2(i - k, j - k);
  return t;
}

Matrix random_orthogonal(std::size_t dim, Rng& rng) {
  require(dim > 0, "random_orthogonal: dimension must be positive");
  for (int attempt = 0; attempt < 8; ++attempt) {
    Matrix g(dim, dim);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) g(i, j) = rng.normal();

    // Two passes of modified Gram-Schmidt over the columns.
    bool degenerate = false;
    for (int pass = 0; pass < 2 && !degenerate; ++pass) {
      for (std::size_t j = 0; j < dim && !degenerate; ++j) {
        for (std::size_t l = 0; l < j; ++l) {
          KahanSum dot;
          for (std::size_t r = 0; r < dim; ++r) dot.add(g(r, l) * g(r, j));
          const double d = dot.value();
          for (std::size_t r = 0; r < dim; ++r) g(r, j) -= d * g(r, l);
        }
        KahanSum norm2;
        for (std::size_t r = 0; r < dim; ++r) norm2.add(g(r, j) * g(r, j));
        const double norm = std::sqrt(norm2.value());
        if (norm < 1e-8) {
          degenerate = true;
          break;
        }
        for (std::size_t r = 0; r < dim; ++r) g(r, j) /= norm;
      }
    }
    if (!degenerate && orthogonality_defect(g) <= 1e-10) return g;
    // Degenerate draw (vanishingly unlikely): retry with fresh randomness.
  }
  throw VerificationError("random_orthogonal: could not produce an orthogonal matrix");
}

}  // namespace pfalab::matlin
