#include "pfalab/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "pfalab/common.hpp"

namespace pfalab::constructions {

namespace {

constexpr double kCouplingFloor = 1e-6;  // "not diagonal" guard per block
constexpr double kDiagSnapTol = 1e-12;   // Bendel-Mickey terminal snap
constexpr int kBuildAttempts = 8;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::vector<double> sorted_desc(std::vector<double> v) {
  std::sort(v.begin(), v.end(), std::greater<double>());
  return v;
}

}  // namespace

const char* family_name(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::kBlockDiag: return "block-diag";
    case FamilyKind::kDense: return "dense";
    case FamilyKind::kBoundedTail: return "bounded-tail";
    case FamilyKind::kMixed: return "mixed";
  }
  return "unknown";
}

void EigenSpectrumPlan::validate() const {
  require(m >= 4, "spectrum plan: m must be >= 4");
  require(m % 2 == 0, "spectrum plan: m must be even");
  require(k == m / 2, "spectrum plan: k must equal m/2");
  require(epsilons.size() == k, "spectrum plan: need exactly k epsilons");
  for (std::size_t j = 0; j < k; ++j) {
    require(std::isfinite(epsilons[j]) && epsilons[j] > 0.0 &&
                epsilons[j] < 1.0,
            "spectrum plan: epsilons must lie in (0, 1)");
    if (j > 0) {
      require(epsilons[j] > epsilons[j - 1],
              "spectrum plan: epsilons must be strictly increasing");
    }
  }
}

std::vector<double> EigenSpectrumPlan::eigenvalues_construction_order() const {
  std::vector<double> d(m);
  for (std::size_t j = 0; j < k; ++j) {
    d[j] = 1.0 + epsilons[j];
    d[k + j] = 1.0 - epsilons[j];
  }
  return d;
}

std::vector<double> EigenSpectrumPlan::eigenvalues_sorted_desc() const {
  return sorted_desc(eigenvalues_construction_order());
}

EigenSpectrumPlan make_spectrum(std::size_t m, const EpsilonRule& rule) {
  require(m >= 4 && m % 2 == 0, "make_spectrum: m must be even and >= 4");
  require(std::isfinite(rule.first) && std::isfinite(rule.last) &&
              rule.first > 0.0 && rule.last < 1.0 && rule.first < rule.last,
          "make_spectrum: need 0 < first < last < 1");
  EigenSpectrumPlan plan;
  plan.m = m;
  plan.k = m / 2;
  plan.epsilons.resize(plan.k);
  for (std::size_t j = 0; j < plan.k; ++j) {
    plan.epsilons[j] = rule.first + (rule.last - rule.first) *
                                        static_cast<double>(j) /
                                        static_cast<double>(plan.k - 1);
  }
  plan.validate();
  return plan;
}

EigenSpectrumPlan make_spectrum_explicit(std::size_t m,
                                         std::vector<double> epsilons) {
  require(m >= 4 && m % 2 == 0,
          "make_spectrum_explicit: m must be even and >= 4");
  EigenSpectrumPlan plan;
  plan.m = m;
  plan.k = m / 2;
  plan.epsilons = std::move(epsilons);
  plan.validate();
  return plan;
}

void bendel_mickey_to_correlation(matlin::Matrix& a, matlin::Matrix& basis) {
  const std::size_t n = a.rows();
  require(n >= 1 && a.cols() == n, "bendel_mickey: matrix must be square");
  require(basis.rows() == n && basis.cols() == n,
          "bendel_mickey: basis shape mismatch");
  require(a.max_asymmetry() <= 1e-10, "bendel_mickey: matrix not symmetric");
  KahanSum tr;
  for (std::size_t i = 0; i < n; ++i) tr.add(a(i, i));
  require(std::abs(tr.value() - static_cast<double>(n)) <= 1e-8,
          "bendel_mickey: trace must equal the dimension");

  // Each rotation sets one diagonal entry to exactly 1 and preserves the
  // trace, so at most n-1 rotations are needed.
  for (std::size_t pass = 0; pass + 1 < n; ++pass) {
    std::size_t p = n, q = n;
    for (std::size_t i = 0; i < n && (p == n || q == n); ++i) {
      if (p == n && a(i, i) < 1.0 - kDiagSnapTol) p = i;
      if (q == n && a(i, i) > 1.0 + kDiagSnapTol) q = i;
    }
    if (p == n || q == n) break;

    const double app = a(p, p);
    const double aqq = a(q, q);
    const double apq = a(p, q);
    const double disc = std::sqrt(apq * apq - (app - 1.0) * (aqq - 1.0));
    const double denom = apq >= 0.0 ? apq + disc : apq - disc;
    const double t = (app - 1.0) / denom;
    const double c = 1.0 / std::sqrt(1.0 + t * t);
    const double s = t * c;

    for (std::size_t r = 0; r < n; ++r) {
      if (r == p || r == q) continue;
      const double arp = a(r, p);
      const double arq = a(r, q);
      a(r, p) = a(p, r) = c * arp - s * arq;
      a(r, q) = a(q, r) = s * arp + c * arq;
    }
    a(p, p) = 1.0;
    a(q, q) = app + aqq - 1.0;
    a(p, q) = a(q, p) = s * c * (app - aqq) + (c * c - s * s) * apq;

    double* bp = basis.row_ptr(p);
    double* bq = basis.row_ptr(q);
    for (std::size_t j = 0; j < n; ++j) {
      const double vp = bp[j];
      const double vq = bq[j];
      bp[j] = c * vp - s * vq;
      bq[j] = s * vp + c * vq;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(a(i, i) - 1.0) > kDiagSnapTol) {
      std::ostringstream msg;
      msg << "bendel_mickey: diagonal entry " << i
          << " did not reach 1 (value " << a(i, i) << ")";
      throw VerificationError(msg.str());
    }
    a(i, i) = 1.0;
  }
}

FamilyOutput assemble_block_diag(const EigenSpectrumPlan& plan,
                                 const matlin::Matrix& q1,
                                 const matlin::Matrix& q2) {
  plan.validate();
  const std::size_t m = plan.m;
  const std::size_t k = plan.k;
  require(q1.rows() == k && q1.cols() == k && q2.rows() == k &&
              q2.cols() == k,
          "assemble_block_diag: blocks must be k x k with k = m/2");
  require(matlin::orthogonality_defect(q1) <= 1e-10 &&
              matlin::orthogonality_defect(q2) <= 1e-10,
          "assemble_block_diag: blocks must be orthogonal within 1e-10");

  std::vector<double> top(k);
  for (std::size_t j = 0; j < k; ++j) top[j] = 1.0 + plan.epsilons[j];
  matlin::Matrix b1 = matlin::scaled_gram(q1, top);

  // Zero-sum spread around 1 keeps trace(b2) = k while staying strictly
  // below the smallest block-1 eigenvalue 1 + eps_1, so the top-k
  // eigenspace of the assembly is exactly block 1.
  std::vector<double> nu(k);
  const double half_eps = 0.5 * plan.epsilons[0];
  for (std::size_t j = 0; j < k; ++j) {
    const double cj = static_cast<double>(static_cast<long long>(k - 1) -
                                          2 * static_cast<long long>(j)) /
                      static_cast<double>(k - 1);
    nu[j] = 1.0 + half_eps * cj;
  }
  matlin::Matrix b2 = matlin::scaled_gram(q2, nu);
  matlin::Matrix w = q2;
  bendel_mickey_to_correlation(b2, w);

  require(b1.max_off_diagonal() >= kCouplingFloor,
          "assemble_block_diag: block 1 is numerically diagonal "
          "(the family requires a non-diagonal block)");
  require(b2.max_off_diagonal() >= kCouplingFloor,
          "assemble_block_diag: block 2 is numerically diagonal "
          "(the family requires a non-diagonal block)");

  FamilyOutput fam;
  fam.kind = FamilyKind::kBlockDiag;
  fam.design_k = k;
  fam.sigma.dim = m;
  fam.sigma.entries = matlin::Matrix(m, m, 0.0);
  fam.t = matlin::Matrix(m, m, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      fam.sigma.entries(i, j) = b1(i, j);
      fam.sigma.entries(k + i, k + j) = b2(i, j);
      fam.t(i, j) = q1(i, j);
      fam.t(k + i, k + j) = w(i, j);
    }
  }
  fam.d = top;
  fam.d.insert(fam.d.end(), nu.begin(), nu.end());
  fam.planned_spectrum = sorted_desc(fam.d);
  fam.sigma.validate_basic();
  return fam;
}

FamilyOutput build_block_diag_family(const EigenSpectrumPlan& plan, Rng& rng) {
  plan.validate();
  for (int attempt = 0; attempt < kBuildAttempts; ++attempt) {
    matlin::Matrix q1 = matlin::random_orthogonal(plan.k, rng);
    matlin::Matrix q2 = matlin::random_orthogonal(plan.k, rng);
    try {
      return assemble_block_diag(plan, q1, q2);
    } catch (const std::invalid_argument&) {
      // A random orthogonal block came out (numerically) diagonal; redraw.
      continue;
    }
  }
  throw VerificationError(
      "build_block_diag_family: no usable random blocks after retries");
}

std::vector<double> make_dense_profile(std::size_t m) {
  require(m >= 2, "make_dense_profile: m must be >= 2");
  std::vector<double> u(m);
  KahanSum norm2;
  for (std::size_t i = 0; i < m; ++i) {
    u[i] = 1.0 + 0.5 * static_cast<double>(i) / static_cast<double>(m - 1);
    norm2.add(u[i] * u[i]);
  }
  const double inv = 1.0 / std::sqrt(norm2.value());
  for (double& x : u) x *= inv;
  return u;
}

namespace {

void validate_dense_profile(const std::vector<double>& u) {
  require(!u.empty(), "dense profile: empty vector");
  double lo = 2.0;
  double hi = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    require(std::isfinite(u[i]), "dense profile: entries must be finite");
    const double mag = std::abs(u[i]);
    require(mag > 0.0, "dense profile: entries must be nonzero");
    require(std::abs(2.0 * u[i] * u[i] - 1.0) > 1e-12,
            "dense profile: 2 u_i^2 must stay away from 1");
    lo = std::min(lo, mag);
    hi = std::max(hi, mag);
  }
  require(hi < 1.0, "dense profile: max |u_i| must be below 1");
  require(lo < hi, "dense profile: entries must not all share one magnitude");
}

FamilyOutput reflection_family(FamilyKind kind, const EigenSpectrumPlan& plan,
                               const std::vector<double>& u,
                               std::vector<double> d) {
  FamilyOutput fam;
  fam.kind = kind;
  fam.design_k = plan.k;
  fam.t = matlin::householder_reflection(u);
  fam.d = std::move(d);
  fam.sigma.dim = plan.m;
  fam.sigma.entries = matlin::scaled_gram(fam.t, fam.d);
  fam.planned_spectrum = sorted_desc(fam.d);
  fam.sigma.validate_basic();
  return fam;
}

}  // namespace

FamilyOutput build_dense_family(const EigenSpectrumPlan& plan) {
  plan.validate();
  return build_dense_family(plan, make_dense_profile(plan.m));
}

FamilyOutput build_dense_family(const EigenSpectrumPlan& plan,
                                const std::vector<double>& u) {
  plan.validate();
  require(u.size() == plan.m, "build_dense_family: u must have length m");
  validate_dense_profile(u);
  return reflection_family(FamilyKind::kDense, plan, u,
                           plan.eigenvalues_construction_order());
}

FamilyOutput build_bounded_tail_family(const EigenSpectrumPlan& plan,
                                       double u0) {
  plan.validate();
  require(std::isfinite(u0) && u0 > 0.0 && u0 <= 0.25,
          "build_bounded_tail_family: u_0 must lie in (0, 1/4]; values near "
          "sqrt(2)/2 would zero the tail diagonal entry of the reflection");
  std::vector<double> u = make_dense_profile(plan.m - 1);
  const double scale = std::sqrt(1.0 - u0 * u0);
  for (double& x : u) x *= scale;
  u.push_back(u0);
  validate_dense_profile(u);
  // Construction order puts 1 - eps_k on the last column, so the tail index
  // keeps sigma >= (1 - eps_k)(1 - 2 u0^2)^2.
  return reflection_family(FamilyKind::kBoundedTail, plan, u,
                           plan.eigenvalues_construction_order());
}

FamilyOutput build_mixed_family(const EigenSpectrumPlan& plan,
                                double tilde_u0) {
  plan.validate();
  const std::size_t m = plan.m;
  const std::size_t k = plan.k;
  require(m >= 8, "build_mixed_family: m must be >= 8");
  require(std::isfinite(tilde_u0) && tilde_u0 > 0.0 && tilde_u0 < 0.125,
          "build_mixed_family: tilde_u0 must lie in the open interval "
          "(0, 1/8)");

  std::vector<double> u(m, 0.0);
  u[0] = 1.0 / std::sqrt(static_cast<double>(m));
  u[k - 1] = std::sqrt(2.0) / 4.0;
  u[k] = tilde_u0;
  const double mass =
      1.0 - 1.0 / static_cast<double>(m) - 0.125 - tilde_u0 * tilde_u0;
  require(mass > 0.0, "build_mixed_family: profile mass must be positive");
  const double common = std::sqrt(mass / static_cast<double>(k - 2));
  for (std::size_t i = 1; i + 1 < k; ++i) u[i] = common;

  // Factor values 1 + eps go to columns 1..k-1 and m; residual values fill
  // columns k..m-1 so that rows 1, k, k+1 see exactly the residual columns
  // their closed forms require and row m sees none.
  std::vector<double> d(m);
  for (std::size_t j = 0; j + 1 < k; ++j) d[j] = 1.0 + plan.epsilons[j];
  d[k - 1] = 1.0 - plan.epsilons[k - 1];
  d[k] = 1.0 - plan.epsilons[0];
  for (std::size_t j = 1; j + 1 < k; ++j) d[k + j] = 1.0 - plan.epsilons[j];
  d[m - 1] = 1.0 + plan.epsilons[k - 1];

  FamilyOutput fam;
  fam.kind = FamilyKind::kMixed;
  fam.design_k = k;
  fam.t = matlin::householder_reflection(u);
  fam.d = std::move(d);
  fam.sigma.dim = m;
  fam.sigma.entries = matlin::scaled_gram(fam.t, fam.d);
  fam.planned_spectrum = sorted_desc(fam.d);
  fam.sigma.validate_basic();
  return fam;
}

double mixed_sigma1_closed_form(const EigenSpectrumPlan& plan,
                                double tilde_u0) {
  plan.validate();
  const double u1_sq = 1.0 / static_cast<double>(plan.m);
  const double lambda_kp1 = 1.0 - plan.epsilons.front();
  const double lambda_m = 1.0 - plan.epsilons.back();
  return 4.0 * lambda_kp1 * u1_sq * tilde_u0 * tilde_u0 +
         0.5 * lambda_m * u1_sq;
}

double mixed_sigma_k1_lower_bound(double eps_last, double tilde_u0) {
  const double w = 1.0 - 2.0 * tilde_u0 * tilde_u0;
  return (1.0 - eps_last) * (w * w + 2.0 * tilde_u0 * tilde_u0);
}

double bounded_tail_a_bound(double eps_last, double u0) {
  return 1.0 / ((1.0 - 2.0 * u0 * u0) * std::sqrt(1.0 - eps_last));
}

double planned_theta(const FamilyOutput& fam) {
  KahanSum sum;
  for (std::size_t j = fam.design_k; j < fam.planned_spectrum.size(); ++j) {
    sum.add(fam.planned_spectrum[j] * fam.planned_spectrum[j]);
  }
  return std::sqrt(sum.value()) /
         static_cast<double>(fam.planned_spectrum.size());
}

void verify_spectrum_recovery(const FamilyOutput& fam) {
  const matlin::SpectralDecomposition dec = matlin::eigendecompose(fam.sigma);
  if (dec.eigenvalues.size() != fam.planned_spectrum.size()) {
    throw VerificationError("verify_spectrum_recovery: dimension mismatch");
  }
  double worst = 0.0;
  for (std::size_t j = 0; j < dec.eigenvalues.size(); ++j) {
    worst = std::max(worst,
                     std::abs(dec.eigenvalues[j] - fam.planned_spectrum[j]));
  }
  if (worst > 1e-8) {
    std::ostringstream msg;
    msg << "verify_spectrum_recovery: recovered spectrum deviates from the "
           "plan by "
        << worst;
    throw VerificationError(msg.str());
  }

  KahanSum sum;
  for (std::size_t j = fam.design_k; j < dec.eigenvalues.size(); ++j) {
    sum.add(dec.eigenvalues[j] * dec.eigenvalues[j]);
  }
  const double theta_recovered =
      std::sqrt(sum.value()) / static_cast<double>(dec.eigenvalues.size());
  if (std::abs(theta_recovered - planned_theta(fam)) > 1e-8) {
    throw VerificationError(
        "verify_spectrum_recovery: residual quality differs between the "
        "planned and recovered spectra");
  }
}

}  // namespace pfalab::constructions
