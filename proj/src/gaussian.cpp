#include "pfalab/gaussian.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "pfalab/common.hpp"

namespace pfalab::gaussian {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Integration window: the standard normal density is below 1e-16 for
// |z| > 8.5, so truncation error is negligible against the 1e-10 target.
constexpr double kZWindow = 8.5;
constexpr double kQuadTol = 1e-10;
constexpr int kInitialSegments = 6;
constexpr std::size_t kMaxSegments = 200000;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// 15-point Kronrod abscissae (positive half) with the embedded 7-point
// Gauss rule on the odd-indexed nodes.  Standard tabulated values.
constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct GkEstimate {
  double value = 0.0;
  double error = 0.0;
};

template <typename F>
GkEstimate gk15(const F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double f_center = f(center);
  double kronrod = kWgk[7] * f_center;
  double gauss = kWg[3] * f_center;
  for (int i = 0; i < 7; ++i) {
    const double offset = half * kXgk[i];
    const double sum = f(center - offset) + f(center + offset);
    kronrod += kWgk[i] * sum;
    if (i % 2 == 1) gauss += kWg[i / 2] * sum;
  }
  return {half * kronrod, std::abs(half * (kronrod - gauss))};
}

template <typename F>
double adaptive_quadrature(const F& f, double a, double b, double tol) {
  struct Segment {
    double a, b, tol;
  };
  std::vector<Segment> stack;
  const double width = (b - a) / kInitialSegments;
  for (int i = kInitialSegments - 1; i >= 0; --i) {
    stack.push_back({a + i * width, a + (i + 1) * width,
                     tol / kInitialSegments});
  }
  KahanSum total;
  std::size_t processed = 0;
  while (!stack.empty()) {
    if (++processed > kMaxSegments) {
      throw VerificationError(
          "adaptive_quadrature: refinement did not converge");
    }
    const Segment seg = stack.back();
    stack.pop_back();
    const GkEstimate est = gk15(f, seg.a, seg.b);
    if (est.error <= seg.tol || (seg.b - seg.a) < 1e-13) {
      total.add(est.value);
      continue;
    }
    const double mid = 0.5 * (seg.a + seg.b);
    stack.push_back({mid, seg.b, 0.5 * seg.tol});
    stack.push_back({seg.a, mid, 0.5 * seg.tol});
  }
  return total.value();
}

double joint_survival_nonneg(double rho, double c1_i, double c2_i,
                             double c1_j, double c2_j) {
  const double root_rho = std::sqrt(rho);
  const double inv_resid = 1.0 / std::sqrt(1.0 - rho);
  const auto band = [inv_resid, root_rho](double hi, double lo, double z) {
    const double zr = root_rho * z;
    return std_normal_cdf((zr + hi) * inv_resid) -
           std_normal_cdf((zr + lo) * inv_resid);
  };
  const auto integrand = [&](double z) {
    return band(c1_i, c2_i, z) * band(c1_j, c2_j, z) * std_normal_pdf(z);
  };
  double value = adaptive_quadrature(integrand, -kZWindow, kZWindow, kQuadTol);
  if (value < -1e-8 || value > 1.0 + 1e-8) {
    std::ostringstream msg;
    msg << "joint_survival: quadrature result " << value
        << " escapes [0, 1] beyond tolerance";
    throw VerificationError(msg.str());
  }
  if (value < 0.0) value = 0.0;
  if (value > 1.0) value = 1.0;
  return value;
}

void check_c_pair(double c1, double c2, const char* which) {
  require(!std::isnan(c1) && !std::isnan(c2),
          std::string("joint_survival: NaN threshold for index ") + which);
  require(c1 >= c2,
          std::string("joint_survival: need c1 >= c2 for index ") + which);
}

}  // namespace

double std_normal_cdf(double x) {
  if (std::isnan(x)) throw std::invalid_argument("std_normal_cdf: NaN input");
  return 0.5 * std::erfc(-x * kInvSqrt2);
}

double std_normal_pdf(double x) {
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double std_normal_quantile(double p) {
  require(!std::isnan(p) && p >= 0.0 && p <= 1.0,
          "std_normal_quantile: p must lie in [0, 1]");
  if (p == 0.0) return -std::numeric_limits<double>::infinity();
  if (p == 1.0) return std::numeric_limits<double>::infinity();

  // Wichura's PPND16 rational approximations.
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
              6.7265770927008700853e4) *
                 r +
             4.5921953931549871457e4) *
                r +
            1.3731693765509461125e4) *
               r +
           1.9715909503065514427e3) *
              r +
          1.3314166789178437745e2) *
             r +
         3.3871328727963666080e0);
    const double den =
        (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
              3.9307895800092710610e4) *
                 r +
             2.1213794301586595867e4) *
                r +
            5.3941960214247511077e3) *
               r +
           6.8718700749205790830e2) *
              r +
          4.2313330701600911252e1) *
             r +
         1.0);
    return q * num / den;
  }

  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) *
                  r +
              2.41780725177450611770e-1) *
                 r +
             1.27045825245236838258e0) *
                r +
            3.64784832476320460504e0) *
               r +
           5.76949722146069140550e0) *
              r +
          4.63033784615654529590e0) *
             r +
         1.42343711074968357734e0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) *
                  r +
              1.51986665636164571966e-2) *
                 r +
             1.48103976427480074590e-1) *
                r +
            6.89767334985100004550e-1) *
               r +
           1.67638483018380384940e0) *
              r +
          2.05319162663775882187e0) *
             r +
         1.0);
    value = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) *
                  r +
              1.24266094738807843860e-3) *
                 r +
             2.65321895265761230930e-2) *
                r +
            2.96560571828504891230e-1) *
               r +
           1.78482653991729133580e0) *
              r +
          5.46378491116411436990e0) *
             r +
         6.65790464350110377720e0);
    const double den =
        ((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) *
                  r +
              1.84631831751005468180e-5) *
                 r +
             7.86869131145613259100e-4) *
                r +
            1.48753612908506148525e-2) *
               r +
           1.36929880922735805310e-1) *
              r +
          5.99832206555887937690e-1) *
             r +
         1.0;
    value = num / den;
  }
  return (q < 0.0) ? -value : value;
}

double marginal_rejection_prob(double t, double shift, double a,
                               bool degenerate) {
  require(std::isfinite(t) && t >= 0.0 && t <= 1.0,
          "marginal_rejection_prob: t must lie in [0, 1]");
  require(std::isfinite(shift), "marginal_rejection_prob: non-finite shift");
  if (degenerate) {
    // Deterministic p-value; ties count as rejections.
    return (2.0 * std_normal_cdf(-std::abs(shift)) <= t) ? 1.0 : 0.0;
  }
  require(std::isfinite(a) && a > 0.0,
          "marginal_rejection_prob: a must be positive and finite");
  const double z_half = std_normal_quantile(0.5 * t);
  const double c1 = a * (-z_half - shift);
  const double c2 = a * (z_half - shift);
  return 1.0 - (std_normal_cdf(c1) - std_normal_cdf(c2));
}

ThresholdProfile build_threshold_profile(double t,
                                         const std::vector<double>& shift,
                                         const std::vector<double>& a,
                                         const std::vector<char>& degenerate) {
  require(std::isfinite(t) && t >= 0.0 && t <= 1.0,
          "build_threshold_profile: t must lie in [0, 1]");
  const std::size_t m = shift.size();
  require(a.size() == m && degenerate.size() == m,
          "build_threshold_profile: input length mismatch");

  ThresholdProfile profile;
  profile.t = t;
  profile.z_half = std_normal_quantile(0.5 * t);
  profile.r1.resize(m);
  profile.r2.resize(m);
  profile.c1.assign(m, std::numeric_limits<double>::quiet_NaN());
  profile.c2.assign(m, std::numeric_limits<double>::quiet_NaN());
  profile.marginal_prob.resize(m);
  profile.degenerate = degenerate;

  for (std::size_t i = 0; i < m; ++i) {
    require(std::isfinite(shift[i]),
            "build_threshold_profile: non-finite shift entry");
    profile.r1[i] = -profile.z_half - shift[i];
    profile.r2[i] = profile.z_half - shift[i];
    const bool degen = degenerate[i] != 0;
    if (!degen) {
      require(std::isfinite(a[i]) && a[i] > 0.0,
              "build_threshold_profile: a must be positive for "
              "non-degenerate indices");
      profile.c1[i] = a[i] * profile.r1[i];
      profile.c2[i] = a[i] * profile.r2[i];
    }
    profile.marginal_prob[i] =
        marginal_rejection_prob(t, shift[i], degen ? 0.0 : a[i], degen);
  }
  return profile;
}

double joint_survival(double rho, double c1_i, double c2_i, double c1_j,
                      double c2_j) {
  require(!std::isnan(rho), "joint_survival: NaN correlation");
  check_c_pair(c1_i, c2_i, "i");
  check_c_pair(c1_j, c2_j, "j");
  if (std::abs(rho) >= kRhoDomainLimit) {
    std::ostringstream msg;
    msg << "joint_survival: |rho| = " << std::abs(rho)
        << " is outside the quadrature domain (needs |rho| < 1 - 1e-9)";
    throw std::domain_error(msg.str());
  }
  if (rho < 0.0) {
    // Reflect index j: V_j -> -V_j flips the correlation sign and maps
    // the band [c2_j, c1_j] to [-c1_j, -c2_j].
    return joint_survival_nonneg(-rho, c1_i, c2_i, -c2_j, -c1_j);
  }
  return joint_survival_nonneg(rho, c1_i, c2_i, c1_j, c2_j);
}

double comonotone_survival(double sign, double c1_i, double c2_i, double c1_j,
                           double c2_j) {
  require(sign != 0.0 && !std::isnan(sign),
          "comonotone_survival: sign must be nonzero");
  check_c_pair(c1_i, c2_i, "i");
  check_c_pair(c1_j, c2_j, "j");
  if (sign < 0.0) {
    // V_j = -V_i maps the j band to its reflection.
    const double hi = -c2_j;
    const double lo = -c1_j;
    c1_j = hi;
    c2_j = lo;
  }
  const double hi = std::min(c1_i, c1_j);
  const double lo = std::max(c2_i, c2_j);
  if (!(hi > lo)) return 0.0;
  return std::max(0.0, std_normal_cdf(hi) - std_normal_cdf(lo));
}

const char* pair_method_name(PairMethod method) {
  switch (method) {
    case PairMethod::kQuadrature: return "quadrature";
    case PairMethod::kDegenerateBranch: return "degenerate-branch";
    case PairMethod::kReflectionBranch: return "reflection-branch";
    case PairMethod::kBoundaryClosedForm: return "boundary-closed-form";
  }
  return "unknown";
}

PairCovariance pair_covariance(std::size_t i, std::size_t j, double rho,
                               const ThresholdProfile& profile) {
  const std::size_t m = profile.size();
  require(i < m && j < m && i != j,
          "pair_covariance: indices must be distinct and in range");
  PairCovariance out;
  out.i = i;
  out.j = j;
  out.rho = rho;
  const double si = 1.0 - profile.marginal_prob[i];
  const double sj = 1.0 - profile.marginal_prob[j];
  if (profile.degenerate[i] || profile.degenerate[j]) {
    // A deterministic indicator is uncorrelated with everything.
    out.joint_survival = si * sj;
    out.cov = 0.0;
    out.method = PairMethod::kDegenerateBranch;
    return out;
  }
  require(!std::isnan(rho) && std::abs(rho) <= 1.0,
          "pair_covariance: correlation must lie in [-1, 1]");
  if (std::abs(rho) >= kRhoDomainLimit) {
    out.joint_survival = comonotone_survival(rho, profile.c1[i],
                                             profile.c2[i], profile.c1[j],
                                             profile.c2[j]);
    out.cov = out.joint_survival - si * sj;
    out.method = PairMethod::kBoundaryClosedForm;
    return out;
  }
  out.joint_survival = joint_survival(rho, profile.c1[i], profile.c2[i],
                                      profile.c1[j], profile.c2[j]);
  out.cov = out.joint_survival - si * sj;
  out.method =
      (rho < 0.0) ? PairMethod::kReflectionBranch : PairMethod::kQuadrature;
  return out;
}

}  // namespace pfalab::gaussian
