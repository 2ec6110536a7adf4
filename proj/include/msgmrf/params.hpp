#ifndef MSGMRF_PARAMS_HPP
#define MSGMRF_PARAMS_HPP

#include <utility>

#include <Eigen/Core>

#include "msgmrf/mesh.hpp"

namespace msgmrf {

/// Interpretable spatial-process parameters on the log scale: marginal
/// standard deviation, nominal range, and (fixed) smoothness.
struct InterpretableParams {
  double log_sigma = 0.0;
  double log_rho = 0.0;
  double nu = 1.0;
};

struct NaturalParams {
  double log_tau = 0.0;
  double log_kappa = 0.0;
};

/// log kappa = 0.5 log(8 nu) - log rho,
/// log tau   = 0.5 log(Gamma(nu) / (4 pi Gamma(alpha))) - log sigma
///             - nu log kappa,  with alpha = nu + 1.
NaturalParams natural_from_interpretable(const InterpretableParams& p);
InterpretableParams interpretable_from_natural(const NaturalParams& n,
                                               double nu = 1.0);

/// nu = 1 fast path for per-vertex field evaluation.
inline NaturalParams natural_nu1(double log_sigma, double log_rho) {
  constexpr double half_log8 = 1.0397207708399179;   // 0.5 log 8
  constexpr double tau_const = -1.2655121234846454;  // 0.5 log(1/(4 pi))
  NaturalParams out;
  out.log_kappa = half_log8 - log_rho;
  out.log_tau = tau_const - log_sigma - out.log_kappa;
  return out;
}

/// Spatially varying log-parameter field: basis over the parameter mesh and
/// one coefficient per basis function.
struct ParamField {
  BasisMatrix basis;
  Eigen::VectorXd coefficients;
};

Eigen::VectorXd eval_log_field(const ParamField& f);

/// Gaussian prior on a scalar log-parameter (mean omega, variance lambda).
struct GaussianPrior {
  double omega = 0.0;
  double lambda = 1.0;
};

/// Standard normal quantile (Acklam's rational approximation polished with
/// one Halley step; |error| well below 1e-12 on (0,1)).
double normal_quantile(double p);
double normal_cdf(double z);
double normal_pdf(double z);

/// Prior whose lognormal has the stated quantiles:
/// omega = (log q_low + log q_high)/2 at the default symmetric levels, and
/// generally the unique (omega, lambda) matching both quantiles.
GaussianPrior prior_from_quantiles(double q_low, double q_high,
                                   double p_low = 0.025,
                                   double p_high = 0.975);

double log_prior_density(const GaussianPrior& prior, double theta);

}  // namespace msgmrf

#endif
