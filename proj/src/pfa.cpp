#include "pfalab/pfa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "pfalab/common.hpp"

namespace pfalab::pfa {

namespace {

constexpr double kSortSlack = 1e-12;    // descending-order tolerance
constexpr double kDiagFloor = -1e-8;    // PSD necessary condition on A
constexpr double kLogFloor = 1e-9;      // min a must exceed 1 + this for logs

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_descending(const std::vector<double>& eigenvalues) {
  require(!eigenvalues.empty(), "eigenvalues must be nonempty");
  for (std::size_t j = 0; j < eigenvalues.size(); ++j) {
    require(std::isfinite(eigenvalues[j]), "eigenvalues must be finite");
    if (j > 0) {
      require(eigenvalues[j] <= eigenvalues[j - 1] + kSortSlack,
              "eigenvalues must be sorted in descending order");
    }
  }
}

}  // namespace

std::size_t PfaModel::degenerate_count() const {
  std::size_t n = 0;
  for (char d : degenerate) n += (d != 0);
  return n;
}

const char* regime_name(Regime regime) {
  switch (regime) {
    case Regime::kBounded: return "bounded";
    case Regime::kDiverging: return "diverging";
    case Regime::kDegenerateAtFiniteM: return "degenerate-at-finite-m";
  }
  return "unknown";
}

double theta(const std::vector<double>& eigenvalues, std::size_t k) {
  check_descending(eigenvalues);
  const std::size_t m = eigenvalues.size();
  require(k <= m, "theta: k must not exceed the dimension");
  KahanSum sum;
  for (std::size_t j = k; j < m; ++j) sum.add(eigenvalues[j] * eigenvalues[j]);
  return std::sqrt(sum.value()) / static_cast<double>(m);
}

KSelection select_k(const std::vector<double>& eigenvalues, double c,
                    double delta) {
  check_descending(eigenvalues);
  require(std::isfinite(c) && c > 0.0, "select_k: c must be positive");
  require(std::isfinite(delta) && delta > 0.0,
          "select_k: delta must be positive");
  const std::size_t m = eigenvalues.size();
  const double bound =
      c * std::pow(static_cast<double>(m), -delta);
  for (std::size_t k = 0; k <= m; ++k) {
    const double th = theta(eigenvalues, k);
    if (th <= bound) return {k, th, bound};
  }
  // Unreachable: theta(., m) == 0 <= bound for positive c.
  throw VerificationError("select_k: scan failed to terminate");
}

PfaModel decompose(const matlin::CorrelationMatrix& sigma, std::size_t k) {
  return from_decomposition(sigma, matlin::eigendecompose(sigma), k);
}

PfaModel from_decomposition(const matlin::CorrelationMatrix& sigma,
                            const matlin::SpectralDecomposition& dec,
                            std::size_t k) {
  const std::size_t m = sigma.dim;
  sigma.validate_basic();
  require(dec.eigenvalues.size() == m && dec.eigenvectors.rows() == m &&
              dec.eigenvectors.cols() == m,
          "from_decomposition: decomposition shape mismatch");
  require(k <= m, "from_decomposition: k must not exceed the dimension");
  check_descending(dec.eigenvalues);

  PfaModel model;
  model.m = m;
  model.k = k;
  model.eigenvalues = dec.eigenvalues;
  model.t = dec.eigenvectors;

  model.loadings = matlin::Matrix(m, k);
  for (std::size_t j = 0; j < k; ++j) {
    const double root = std::sqrt(std::max(dec.eigenvalues[j], 0.0));
    for (std::size_t i = 0; i < m; ++i) {
      model.loadings(i, j) = root * model.t(i, j);
    }
  }

  model.omega.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    KahanSum w;
    for (std::size_t j = 0; j < k; ++j) {
      w.add(model.loadings(i, j) * model.loadings(i, j));
    }
    model.omega[i] = w.value();
  }

  // A = sigma - L L^T, accumulated in spectral form as the eigenvalue
  // tail sum_{j >= k} lambda_j T_j T_j^T (identical in exact arithmetic).
  // The tail form has no subtractive cancellation, so residual
  // correlations of rank-deficient residuals stay within an ulp of
  // +-1 instead of exploding when the variances are tiny, and A is
  // positive semidefinite by construction.  Built on the upper triangle
  // and mirrored so the result is exactly symmetric.
  model.resid_cov = matlin::Matrix(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = i; l < m; ++l) {
      KahanSum q;
      for (std::size_t j = k; j < m; ++j) {
        q.add(dec.eigenvalues[j] * model.t(i, j) * model.t(l, j));
      }
      model.resid_cov(i, l) = q.value();
      model.resid_cov(l, i) = q.value();
    }
  }

  model.sigma_resid.assign(m, 0.0);
  model.a.assign(m, 0.0);
  model.degenerate.assign(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const double qii = model.resid_cov(i, i);
    if (qii < kDiagFloor) {
      std::ostringstream msg;
      msg << "from_decomposition: residual variance " << qii << " at index "
          << i << " is negative beyond tolerance";
      throw VerificationError(msg.str());
    }
    model.sigma_resid[i] = std::max(qii, 0.0);
    if (model.sigma_resid[i] <= kDegenerateSigmaTol) {
      model.degenerate[i] = 1;
      model.a[i] = std::numeric_limits<double>::infinity();
    } else {
      model.a[i] = 1.0 / std::sqrt(model.sigma_resid[i]);
    }
  }

  model.resid_corr = matlin::Matrix(m, m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (model.degenerate[i]) continue;
    model.resid_corr(i, i) = 1.0;
    const double ai = model.a[i];
    for (std::size_t l = i + 1; l < m; ++l) {
      if (model.degenerate[l]) continue;
      double rho = model.resid_cov(i, l) * ai * model.a[l];
      if (std::abs(rho) > 1.0 + 1e-10) {
        std::ostringstream msg;
        msg << "from_decomposition: residual correlation " << rho
            << " at pair (" << i << ", " << l << ") exceeds 1 beyond tolerance";
        throw VerificationError(msg.str());
      }
      rho = std::clamp(rho, -1.0, 1.0);
      model.resid_corr(i, l) = rho;
      model.resid_corr(l, i) = rho;
    }
  }
  return model;
}

SEpsilonResult s_epsilon(const PfaModel& model, double eps,
                         std::size_t max_pairs_reported) {
  require(std::isfinite(eps) && eps > 0.0 && eps < 1.0,
          "s_epsilon: eps must lie in (0, 1)");
  SEpsilonResult out;
  out.threshold = 1.0 - eps;
  for (std::size_t i = 0; i < model.m; ++i) {
    if (model.degenerate[i]) continue;
    for (std::size_t j = i + 1; j < model.m; ++j) {
      if (model.degenerate[j]) continue;
      if (std::abs(model.resid_corr(i, j)) > out.threshold) {
        ++out.count;
        if (out.pairs.size() < max_pairs_reported) out.pairs.emplace_back(i, j);
      }
    }
  }
  return out;
}

double weak_dependence_sum(const PfaModel& model, double beta) {
  require(std::isfinite(beta) && beta > 0.0 && beta <= 2.0,
          "weak_dependence_sum: beta must lie in (0, 2]");
  KahanSum sum;
  for (std::size_t i = 0; i < model.m; ++i) {
    for (std::size_t j = i; j < model.m; ++j) {
      const double q = std::abs(model.resid_cov(i, j));
      if (q == 0.0) continue;  // pow(0, beta) is 0 for beta > 0
      sum.add(std::pow(q, beta));
    }
  }
  const double mm = static_cast<double>(model.m);
  return sum.value() / (mm * mm);
}

Regime classify_regime(const TrackedSeries& series, double growth_ratio) {
  require(!series.sigma_resid.empty() &&
              series.sigma_resid.size() == series.a.size(),
          "classify_regime: series must be nonempty and consistent");
  require(std::isfinite(growth_ratio) && growth_ratio > 1.0,
          "classify_regime: growth ratio must exceed 1");
  for (double s : series.sigma_resid) {
    if (s <= kDegenerateSigmaTol) return Regime::kDegenerateAtFiniteM;
  }
  const double first = series.a.front();
  const double last = series.a.back();
  if (std::isfinite(first) && std::isfinite(last) &&
      last >= growth_ratio * first) {
    return Regime::kDiverging;
  }
  return Regime::kBounded;
}

RatioCondition ratio_condition(
    const std::vector<std::vector<double>>& diverging_a_per_m) {
  RatioCondition out;
  if (diverging_a_per_m.size() < 3) return out;
  for (const std::vector<double>& values : diverging_a_per_m) {
    if (values.size() < 2) return out;
    double lo = values.front();
    double hi = values.front();
    for (double v : values) {
      require(std::isfinite(v) && v > 0.0,
              "ratio_condition: a-values must be finite and positive");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (lo <= 1.0 + kLogFloor) {
      out.per_m_ratio.clear();
      return out;
    }
    out.per_m_ratio.push_back(std::log(hi) / std::log(lo));
  }
  out.applicable = true;
  out.q_estimate = out.per_m_ratio.back();
  const auto [lo_it, hi_it] =
      std::minmax_element(out.per_m_ratio.begin(), out.per_m_ratio.end());
  out.stable = (*hi_it <= 2.0 * *lo_it);
  return out;
}

ConditionReport build_condition_report(const PfaModel& model, double c,
                                       double delta, double eps,
                                       const std::vector<double>& beta_grid) {
  require(std::isfinite(c) && c > 0.0,
          "build_condition_report: c must be positive");
  require(std::isfinite(delta) && delta > 0.0,
          "build_condition_report: delta must be positive");
  ConditionReport report;
  report.theta_m = theta(model.eigenvalues, model.k);
  report.k_used = model.k;
  report.delta = delta;
  report.c = c;
  report.eps = eps;
  const SEpsilonResult s = s_epsilon(model, eps);
  report.s_eps_count = s.count;
  const double mm = static_cast<double>(model.m);
  report.s_eps_normalized =
      std::pow(mm, -2.0 + delta) * static_cast<double>(s.count);

  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  std::size_t live = 0;
  for (std::size_t i = 0; i < model.m; ++i) {
    if (model.degenerate[i]) continue;
    ++live;
    lo = std::min(lo, model.a[i]);
    hi = std::max(hi, model.a[i]);
  }
  if (live >= 2 && lo > 1.0 + kLogFloor) {
    report.ratio_applicable = true;
    report.ratio_q_estimate = std::log(hi) / std::log(lo);
  }

  report.weak_dep_sums.reserve(beta_grid.size());
  for (double beta : beta_grid) {
    report.weak_dep_sums.emplace_back(beta, weak_dependence_sum(model, beta));
  }
  return report;
}

}  // namespace pfalab::pfa
