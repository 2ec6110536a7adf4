#include "msgmrf/params.hpp"

#include <cmath>

#include "msgmrf/errors.hpp"

namespace msgmrf {

NaturalParams natural_from_interpretable(const InterpretableParams& p) {
  const double alpha = p.nu + 1.0;
  NaturalParams out;
  out.log_kappa = 0.5 * std::log(8.0 * p.nu) - p.log_rho;
  out.log_tau = 0.5 * (std::lgamma(p.nu) - std::log(4.0 * M_PI) -
                       std::lgamma(alpha)) -
                p.log_sigma - p.nu * out.log_kappa;
  return out;
}

InterpretableParams interpretable_from_natural(const NaturalParams& n,
                                               double nu) {
  const double alpha = nu + 1.0;
  InterpretableParams out;
  out.nu = nu;
  out.log_rho = 0.5 * std::log(8.0 * nu) - n.log_kappa;
  out.log_sigma = 0.5 * (std::lgamma(nu) - std::log(4.0 * M_PI) -
                         std::lgamma(alpha)) -
                  n.log_tau - nu * n.log_kappa;
  return out;
}

Eigen::VectorXd eval_log_field(const ParamField& f) {
  return f.basis.apply(f.coefficients);
}

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidQuantiles("p must be in (0,1)");
  // Acklam 2003 rational approximation
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
          c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // one Halley refinement
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

GaussianPrior prior_from_quantiles(double q_low, double q_high, double p_low,
                                   double p_high) {
  if (!(q_low > 0.0 && q_high > q_low))
    throw InvalidQuantiles("require 0 < q_low < q_high");
  if (!(p_low > 0.0 && p_high < 1.0 && p_low < p_high))
    throw InvalidQuantiles("require 0 < p_low < p_high < 1");
  const double z_low = normal_quantile(p_low);
  const double z_high = normal_quantile(p_high);
  const double sd = (std::log(q_high) - std::log(q_low)) / (z_high - z_low);
  GaussianPrior out;
  out.omega = std::log(q_low) - z_low * sd;
  out.lambda = sd * sd;
  return out;
}

double log_prior_density(const GaussianPrior& prior, double theta) {
  const double d = theta - prior.omega;
  return -0.5 * std::log(2.0 * M_PI * prior.lambda) -
         0.5 * d * d / prior.lambda;
}

}  // namespace msgmrf
