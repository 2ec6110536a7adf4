#ifndef MSGMRF_SAMPLER_HPP
#define MSGMRF_SAMPLER_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "msgmrf/model.hpp"
#include "msgmrf/scoring.hpp"
#include "msgmrf/sparse.hpp"

namespace msgmrf {

/// Random-walk step-size state with windowed adaptation toward a target
/// acceptance rate, applied every adapt_every sweeps for the first
/// adapt_until sweeps.
struct AdaptiveProposal {
  double step_variance = 1e-3;
  double target_accept = 0.25;
  int accepts = 0;
  int attempts = 0;

  void record(bool accepted) {
    ++attempts;
    if (accepted) ++accepts;
  }
  void maybe_adapt(long iteration, int adapt_every, int adapt_until);
};

/// Collapsed Gaussian block: log of
///   integral p(z | x) p(x | canonical(Q_prior, h_prior)) dx
/// with z | x ~ Gau(A x, diag(1/q_eps)), all constants kept, plus the
/// posterior canonical form of x for the paired draw.
struct CollapsedBlock {
  double log_density = 0.0;
  CholeskyFactor posterior_factor;
  Eigen::VectorXd posterior_shift;
};

CollapsedBlock collapsed_block_logdensity(
    const SparseSymmetric& q_prior, const Eigen::VectorXd& h_prior,
    const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& q_eps,
    const Eigen::VectorXd& z_tilde);

/// Prior conditional of a GMRF block given the rest, in canonical form:
/// precision Q[block, block], shift -Q[block, rest] eta_rest.
CanonicalGaussian gmrf_block_conditional(const SparseSymmetric& q,
                                         const std::vector<int>& block,
                                         const Eigen::VectorXd& rest_values);

/// Per-sweep instrumentation.
struct SweepStats {
  long theta_block_updates = 0;
  long eta_star_draws = 0;          // must equal theta_block_updates
  long eta_star_after_reject = 0;
  long tile_draws = 0;
  long theta_eps_updates = 0;
};

struct AcceptanceRecord {
  long iteration = 0;
  std::string block;
  bool accepted = false;
};

struct ChainOutput {
  std::vector<ModelState> samples;  // thinned, post burn-in
  std::vector<AcceptanceRecord> acceptance_log;
  std::map<std::string, double> acceptance_rate;
  std::vector<std::string> warnings;
  // set when a sweep aborted fatally; samples hold what was retained up to
  // that point and last_state carries the diagnostic dump
  std::string error;
  ModelState last_state;
  bool failed() const { return !error.empty(); }
};

/// Blocked Gibbs sampler: joint collapsed (eta0, theta0) update, colour-
/// parallel footprint-approximated (eta_k^T, theta_k^I) updates, colour-
/// parallel tile re-updates of eta_k over three alternating tilings, and
/// per-coefficient theta_eps updates.
class GibbsSampler {
 public:
  GibbsSampler(const ModelSpec& spec, const Workspace& ws, int worker_count);

  /// Prior draws for the parameters, perturbed least squares for eta0, and
  /// small-variance Gaussian noise for the fine scales.
  void init_state(std::uint64_t chain_seed);

  /// One full Algorithm pass; advances iteration and the tiling cycle.
  void gibbs_sweep(std::uint64_t chain_seed);

  void update_eta0_theta0(std::uint64_t chain_seed);
  void update_thetak_colour_parallel(int k, std::uint64_t chain_seed);
  void reupdate_etak_tiles(int k, std::uint64_t chain_seed);
  void update_theta_eps(std::uint64_t chain_seed);

  const ModelState& state() const { return state_; }
  ModelState& mutable_state() { return state_; }
  void set_state(const ModelState& s);

  const SweepStats& last_stats() const { return stats_; }
  const std::vector<AcceptanceRecord>& acceptance_log() const {
    return acceptance_log_;
  }
  void clear_acceptance_log() { acceptance_log_.clear(); }

  /// Measurement-error precisions at all data points for the current state.
  Eigen::VectorXd qeps_all() const;

  /// Collapsed theta0 density at the given value (log); also refreshes the
  /// cached eta0 posterior used for the paired draw.
  double collapsed_theta0_logdensity(const Eigen::Vector2d& theta0,
                                     CollapsedBlock* out) const;

  /// Collapsed (footprint-approximated) density of one scale-k parameter
  /// block at the given (log sigma, log rho) coefficient pair, priors
  /// included; the paired eta_T posterior is returned through out.
  double thetak_block_logdensity(int k, int param_index, double theta_sigma,
                                 double theta_rho,
                                 CollapsedBlock* out = nullptr) const;

 private:
  struct ThetaBlockResult;
  struct ThetaBlockContext;

  void refresh_param_fields(int k);
  void refresh_eps_field();
  Eigen::VectorXd residual_for(const std::vector<int>& data_rows,
                               int exclude_scale,
                               const std::vector<int>& keep_columns) const;
  ThetaBlockContext make_theta_context(int k, int param_index) const;
  std::pair<double, CollapsedBlock> eval_theta_block(
      int k, const ThetaBlockContext& ctx, double theta_sigma,
      double theta_rho) const;
  ThetaBlockResult run_theta_block(int k, int param_index,
                                   std::uint64_t seed) const;
  std::pair<CholeskyFactor, Eigen::VectorXd> tile_conditional(
      int k, const FootprintSpec& fp) const;

  const ModelSpec& spec_;
  const Workspace& ws_;
  int worker_count_;
  ModelState state_;
  // vertex-wise natural parameter fields per scale (index k)
  std::vector<Eigen::VectorXd> kappa_field_;
  std::vector<Eigen::VectorXd> tau_field_;
  Eigen::VectorXd eps_sd_;  // per-datum measurement-error sd
  AdaptiveProposal theta0_proposal_;
  std::vector<std::vector<AdaptiveProposal>> thetak_proposals_;  // [k-1][I]
  std::vector<AdaptiveProposal> eps_proposals_;
  SweepStats stats_;
  std::vector<AcceptanceRecord> acceptance_log_;
};

/// Runs init + n_iterations sweeps, returning every thin-th post-burn-in
/// state. Identical seeds and any worker_count give bit-identical output.
ChainOutput run_chain(const ModelSpec& spec, const Workspace& ws,
                      long n_iterations, long burn_in, long thin,
                      std::uint64_t seed, int worker_count);

/// Posterior-sample predictive summaries at new locations: mean of sampled
/// process values and law-of-total-variance std including measurement error.
PredictiveSummary predict_at(const ModelSpec& spec,
                             const std::vector<ModelState>& samples,
                             const Eigen::MatrixXd& locations);

void write_chain_csv(const ChainOutput& chain, const ModelSpec& spec,
                     const std::string& directory);

/// Rebuilds the thinned states from a write_chain_csv directory.
std::vector<ModelState> read_chain_csv(const ModelSpec& spec,
                                       const std::string& directory);

}  // namespace msgmrf

#endif
