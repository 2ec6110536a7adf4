#include "msgmrf/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <Eigen/SparseCholesky>

#include "msgmrf/errors.hpp"
#include "msgmrf/parallel.hpp"
#include "msgmrf/params.hpp"
#include "msgmrf/rng.hpp"

namespace msgmrf {

void AdaptiveProposal::maybe_adapt(long iteration, int adapt_every,
                                   int adapt_until) {
  if (iteration > adapt_until || adapt_every <= 0) return;
  if (iteration % adapt_every != 0 || attempts == 0) return;
  const double rate = double(accepts) / double(attempts);
  step_variance *= std::exp(rate - target_accept);
  step_variance = std::min(std::max(step_variance, 1e-12), 1e4);
  accepts = 0;
  attempts = 0;
}

CollapsedBlock collapsed_block_logdensity(
    const SparseSymmetric& q_prior, const Eigen::VectorXd& h_prior,
    const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& q_eps,
    const Eigen::VectorXd& z_tilde) {
  const Eigen::Index t = q_prior.dim();
  const Eigen::Index f = a.rows();
  if (h_prior.size() != t || a.cols() != t)
    throw DimensionMismatch("prior block size");
  if (q_eps.size() != f || z_tilde.size() != f)
    throw DimensionMismatch("data chunk size");

  const CholeskyFactor prior_factor = cholesky_factorize(q_prior);
  double quad_prior = 0.0;
  if (!h_prior.isZero(0.0))
    quad_prior = h_prior.dot(prior_factor.solve(h_prior));

  Eigen::SparseMatrix<double> qt = q_prior.full();
  Eigen::VectorXd b = h_prior;
  double data_terms = 0.0;
  if (f > 0) {
    const Eigen::SparseMatrix<double> at = a.transpose();
    qt = Eigen::SparseMatrix<double>(at * q_eps.asDiagonal() * a) + qt;
    b += at * q_eps.cwiseProduct(z_tilde);
    data_terms = 0.5 * q_eps.array().log().sum() -
                 0.5 * z_tilde.dot(q_eps.cwiseProduct(z_tilde)) -
                 0.5 * double(f) * std::log(2.0 * M_PI);
  }
  Eigen::SparseMatrix<double> qt_lower = qt.triangularView<Eigen::Lower>();
  const SparseSymmetric q_post =
      SparseSymmetric::from_lower(std::move(qt_lower));
  CollapsedBlock out;
  out.posterior_factor = cholesky_factorize(q_post);
  out.posterior_shift = b;
  const double quad_post = b.dot(out.posterior_factor.solve(b));
  out.log_density = 0.5 * prior_factor.log_determinant() -
                    0.5 * out.posterior_factor.log_determinant() -
                    0.5 * quad_prior + 0.5 * quad_post + data_terms;
  return out;
}

CanonicalGaussian gmrf_block_conditional(const SparseSymmetric& q,
                                         const std::vector<int>& block,
                                         const Eigen::VectorXd& rest_values) {
  if (block.empty()) throw IndexOutOfRange("empty block");
  std::vector<char> in_block(q.dim(), 0);
  for (int v : block) {
    if (v < 0 || v >= q.dim()) throw IndexOutOfRange("block index");
    in_block[v] = 1;
  }
  std::vector<int> rest;
  rest.reserve(q.dim() - block.size());
  for (int v = 0; v < q.dim(); ++v)
    if (!in_block[v]) rest.push_back(v);
  if (rest_values.size() != static_cast<Eigen::Index>(rest.size()))
    throw DimensionMismatch("rest_values must cover the complement");
  CanonicalGaussian out;
  out.precision = q.submatrix(block);
  if (rest.empty())
    out.shift = Eigen::VectorXd::Zero(block.size());
  else
    out.shift = -(q.block(block, rest) * rest_values);
  return out;
}

namespace {

Eigen::SparseMatrix<double> column_slice(
    const Eigen::SparseMatrix<double, Eigen::RowMajor>& rows,
    const std::vector<int>& cols) {
  std::vector<int> local(rows.cols(), -1);
  for (std::size_t a = 0; a < cols.size(); ++a) local[cols[a]] = int(a);
  std::vector<Eigen::Triplet<double>> trips;
  for (int r = 0; r < rows.outerSize(); ++r) {
    using Iter = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
    for (Iter it(rows, r); it; ++it)
      if (local[it.col()] >= 0)
        trips.emplace_back(r, local[it.col()], it.value());
  }
  Eigen::SparseMatrix<double> out(rows.rows(),
                                  static_cast<Eigen::Index>(cols.size()));
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

std::vector<int> sorted_union(const std::vector<int>& a,
                              const std::vector<int>& b) {
  std::vector<int> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::back_inserter(out));
  return out;
}

}  // namespace

GibbsSampler::GibbsSampler(const ModelSpec& spec, const Workspace& ws,
                           int worker_count)
    : spec_(spec), ws_(ws), worker_count_(std::max(worker_count, 1)) {
  const int n_scales = static_cast<int>(spec_.scales.size());
  state_.eta.resize(n_scales);
  for (int k = 0; k < n_scales; ++k)
    state_.eta[k] =
        Eigen::VectorXd::Zero(spec_.scales[k].process_mesh->vertex_count());
  state_.theta0.setZero();
  state_.theta_sigma.resize(std::max(n_scales - 1, 0));
  state_.theta_rho.resize(std::max(n_scales - 1, 0));
  thetak_proposals_.resize(std::max(n_scales - 1, 0));
  for (int k = 1; k < n_scales; ++k) {
    const Eigen::Index r = spec_.scales[k].param_mesh->vertex_count();
    state_.theta_sigma[k - 1] = Eigen::VectorXd::Zero(r);
    state_.theta_rho[k - 1] = Eigen::VectorXd::Zero(r);
    thetak_proposals_[k - 1].assign(r, AdaptiveProposal{});
    for (auto& p : thetak_proposals_[k - 1]) {
      p.step_variance = spec_.options.initial_proposal_variance;
      p.target_accept = spec_.options.target_accept_pair;
    }
  }
  state_.theta_eps =
      Eigen::VectorXd::Zero(spec_.eps_mesh->vertex_count());
  eps_proposals_.assign(spec_.eps_mesh->vertex_count(), AdaptiveProposal{});
  for (auto& p : eps_proposals_) {
    p.step_variance = spec_.options.initial_proposal_variance;
    p.target_accept = spec_.options.target_accept_scalar;
  }
  theta0_proposal_.step_variance = spec_.options.initial_proposal_variance;
  theta0_proposal_.target_accept = spec_.options.target_accept_pair;
  kappa_field_.resize(n_scales);
  tau_field_.resize(n_scales);
  for (int k = 0; k < n_scales; ++k) refresh_param_fields(k);
  refresh_eps_field();
}

void GibbsSampler::set_state(const ModelState& s) {
  state_ = s;
  for (std::size_t k = 0; k < spec_.scales.size(); ++k)
    refresh_param_fields(static_cast<int>(k));
  refresh_eps_field();
}

void GibbsSampler::refresh_param_fields(int k) {
  const Eigen::Index r = spec_.scales[k].process_mesh->vertex_count();
  if (k == 0) {
    const NaturalParams np = natural_from_interpretable(
        {state_.theta0[0], state_.theta0[1], 1.0});
    kappa_field_[0] = Eigen::VectorXd::Constant(r, std::exp(np.log_kappa));
    tau_field_[0] = Eigen::VectorXd::Constant(r, std::exp(np.log_tau));
    return;
  }
  const Eigen::VectorXd log_sigma =
      ws_.scales[k].param_at_vertices.apply(state_.theta_sigma[k - 1]);
  const Eigen::VectorXd log_rho =
      ws_.scales[k].param_at_vertices.apply(state_.theta_rho[k - 1]);
  kappa_field_[k].resize(r);
  tau_field_[k].resize(r);
  for (Eigen::Index v = 0; v < r; ++v) {
    const NaturalParams np = natural_nu1(log_sigma[v], log_rho[v]);
    kappa_field_[k][v] = std::exp(np.log_kappa);
    tau_field_[k][v] = std::exp(np.log_tau);
  }
}

void GibbsSampler::refresh_eps_field() {
  eps_sd_ = ws_.eps_basis.apply(state_.theta_eps).array().exp();
}

Eigen::VectorXd GibbsSampler::qeps_all() const {
  return eps_sd_.array().square().inverse();
}

Eigen::VectorXd GibbsSampler::residual_for(
    const std::vector<int>& data_rows, int exclude_scale,
    const std::vector<int>& keep_columns) const {
  Eigen::VectorXd z = ws_.chunks->z_chunk(data_rows);
  std::vector<char> keep;
  for (std::size_t k = 0; k < spec_.scales.size(); ++k) {
    const auto rows = ws_.chunks->basis_rows(static_cast<int>(k), data_rows);
    if (static_cast<int>(k) == exclude_scale) {
      if (keep.empty()) {
        keep.assign(rows.cols(), 0);
        for (int c : keep_columns) keep[c] = 1;
      }
      for (int r = 0; r < rows.outerSize(); ++r) {
        using Iter =
            Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
        double acc = 0.0;
        for (Iter it(rows, r); it; ++it)
          if (!keep[it.col()]) acc += it.value() * state_.eta[k][it.col()];
        z[r] -= acc;
      }
    } else {
      z -= rows * state_.eta[k];
    }
  }
  return z;
}

double GibbsSampler::collapsed_theta0_logdensity(const Eigen::Vector2d& theta0,
                                                 CollapsedBlock* out) const {
  const NaturalParams np =
      natural_from_interpretable({theta0[0], theta0[1], 1.0});
  const Eigen::Index r0 = spec_.scales[0].process_mesh->vertex_count();
  const SparseSymmetric q0 = assemble_spde_precision(
      ws_.scales[0].ops, Eigen::VectorXd::Constant(r0, std::exp(np.log_kappa)),
      Eigen::VectorXd::Constant(r0, std::exp(np.log_tau)));

  Eigen::VectorXd z_tilde = spec_.data.values;
  for (std::size_t k = 1; k < spec_.scales.size(); ++k)
    z_tilde -= ws_.scales[k].basis.matrix() * state_.eta[k];

  const Eigen::SparseMatrix<double> a0 = ws_.scales[0].basis.matrix();
  CollapsedBlock blk = collapsed_block_logdensity(
      q0, Eigen::VectorXd::Zero(r0), a0, qeps_all(), z_tilde);
  const double log_prior =
      log_prior_density(spec_.scales[0].sigma_prior, theta0[0]) +
      log_prior_density(spec_.scales[0].rho_prior, theta0[1]);
  if (out) *out = blk;
  return blk.log_density + log_prior;
}

void GibbsSampler::update_eta0_theta0(std::uint64_t chain_seed) {
  Rng rng(derive_seed(chain_seed, state_.iteration, StepTag::theta0, 0));
  CollapsedBlock current;
  double logd_current = collapsed_theta0_logdensity(state_.theta0, &current);
  CollapsedBlock retained = current;

  if (!spec_.options.fix_theta0) {
    const double sd = std::sqrt(theta0_proposal_.step_variance);
    Eigen::Vector2d proposal = state_.theta0;
    proposal[0] += sd * rng.normal();
    proposal[1] += sd * rng.normal();
    bool accepted = false;
    CollapsedBlock prop_blk;
    double logd_prop = -std::numeric_limits<double>::infinity();
    bool valid = true;
    try {
      logd_prop = collapsed_theta0_logdensity(proposal, &prop_blk);
    } catch (const NotPositiveDefinite&) {
      valid = false;  // automatic reject
    }
    const double u = rng.uniform();
    if (valid && std::log(u) < logd_prop - logd_current) accepted = true;
    if (accepted) {
      state_.theta0 = proposal;
      retained = prop_blk;
      refresh_param_fields(0);
    }
    theta0_proposal_.record(accepted);
    acceptance_log_.push_back({state_.iteration, "theta0", accepted});
  }

  // eta0 comes for free from the retained collapsed block
  const Eigen::VectorXd mean =
      retained.posterior_factor.solve(retained.posterior_shift);
  state_.eta[0] = retained.posterior_factor.perturb(mean, rng);
}

struct GibbsSampler::ThetaBlockResult {
  int param_index = -1;
  bool mh_attempted = false;
  bool accepted = false;
  double theta_sigma = 0.0;
  double theta_rho = 0.0;
  Eigen::VectorXd eta_t;
  // accepted-field patch over the influence vertices
  Eigen::VectorXd patch_kappa;
  Eigen::VectorXd patch_tau;
};

struct GibbsSampler::ThetaBlockContext {
  int param_index = -1;
  std::vector<int> t_bar;
  std::vector<int> t_local;
  std::vector<int> blanket_local;
  Eigen::SparseMatrix<double> a_ft;
  Eigen::VectorXd qeps_f;
  Eigen::VectorXd z_tilde;
  Eigen::VectorXd lsig, lrho, pcol;  // over t_bar
  Eigen::VectorXd eta_blanket;
  double cur_sigma = 0.0;
  double cur_rho = 0.0;
};

GibbsSampler::ThetaBlockContext GibbsSampler::make_theta_context(
    int k, int param_index) const {
  const ScaleWorkspace& sw = ws_.scales[k];
  const FootprintSpec& fp = sw.footprints[param_index];
  ThetaBlockContext ctx;
  ctx.param_index = param_index;
  ctx.t_bar = sorted_union(fp.process_set, fp.blanket);
  ctx.t_local.resize(fp.process_set.size());
  {
    std::size_t pos = 0;
    for (std::size_t a = 0; a < ctx.t_bar.size(); ++a)
      if (pos < fp.process_set.size() && ctx.t_bar[a] == fp.process_set[pos])
        ctx.t_local[pos++] = static_cast<int>(a);
  }
  {
    std::vector<char> in_t(ctx.t_bar.size(), 0);
    for (int a : ctx.t_local) in_t[a] = 1;
    for (std::size_t a = 0; a < ctx.t_bar.size(); ++a)
      if (!in_t[a]) ctx.blanket_local.push_back(static_cast<int>(a));
  }

  const auto a_rows = ws_.chunks->basis_rows(k, fp.data_set);
  ctx.a_ft = column_slice(a_rows, fp.process_set);
  ctx.qeps_f.resize(fp.data_set.size());
  for (std::size_t i = 0; i < fp.data_set.size(); ++i) {
    const double sd = eps_sd_[fp.data_set[i]];
    ctx.qeps_f[i] = 1.0 / (sd * sd);
  }
  ctx.z_tilde = residual_for(fp.data_set, k, fp.process_set);

  const Eigen::VectorXd log_sigma_all =
      sw.param_at_vertices.apply(state_.theta_sigma[k - 1]);
  const Eigen::VectorXd log_rho_all =
      sw.param_at_vertices.apply(state_.theta_rho[k - 1]);
  ctx.lsig.resize(ctx.t_bar.size());
  ctx.lrho.resize(ctx.t_bar.size());
  ctx.pcol = Eigen::VectorXd::Zero(ctx.t_bar.size());
  std::vector<int> local(spec_.scales[k].process_mesh->vertex_count(), -1);
  for (std::size_t a = 0; a < ctx.t_bar.size(); ++a) {
    local[ctx.t_bar[a]] = static_cast<int>(a);
    ctx.lsig[a] = log_sigma_all[ctx.t_bar[a]];
    ctx.lrho[a] = log_rho_all[ctx.t_bar[a]];
  }
  for (const auto& [v, w] : sw.param_influence[param_index])
    if (local[v] >= 0) ctx.pcol[local[v]] = w;

  ctx.eta_blanket.resize(ctx.blanket_local.size());
  for (std::size_t a = 0; a < ctx.blanket_local.size(); ++a)
    ctx.eta_blanket[a] = state_.eta[k][ctx.t_bar[ctx.blanket_local[a]]];
  ctx.cur_sigma = state_.theta_sigma[k - 1][param_index];
  ctx.cur_rho = state_.theta_rho[k - 1][param_index];
  return ctx;
}

std::pair<double, CollapsedBlock> GibbsSampler::eval_theta_block(
    int k, const ThetaBlockContext& ctx, double theta_sigma,
    double theta_rho) const {
  const ScaleWorkspace& sw = ws_.scales[k];
  Eigen::VectorXd kap(ctx.t_bar.size()), tau(ctx.t_bar.size());
  for (std::size_t a = 0; a < ctx.t_bar.size(); ++a) {
    const double ls = ctx.lsig[a] + ctx.pcol[a] * (theta_sigma - ctx.cur_sigma);
    const double lr = ctx.lrho[a] + ctx.pcol[a] * (theta_rho - ctx.cur_rho);
    const NaturalParams np = natural_nu1(ls, lr);
    kap[a] = std::exp(np.log_kappa);
    tau[a] = std::exp(np.log_tau);
  }
  const SparseSymmetric q_local =
      assemble_spde_precision_local(sw.ops, ctx.t_bar, kap, tau);
  const SparseSymmetric q_tt = q_local.submatrix(ctx.t_local);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(ctx.t_local.size());
  if (!ctx.blanket_local.empty())
    h = -(q_local.block(ctx.t_local, ctx.blanket_local) * ctx.eta_blanket);
  CollapsedBlock blk =
      collapsed_block_logdensity(q_tt, h, ctx.a_ft, ctx.qeps_f, ctx.z_tilde);
  const double log_prior =
      log_prior_density(spec_.scales[k].sigma_prior, theta_sigma) +
      log_prior_density(spec_.scales[k].rho_prior, theta_rho);
  return {blk.log_density + log_prior, std::move(blk)};
}

double GibbsSampler::thetak_block_logdensity(int k, int param_index,
                                             double theta_sigma,
                                             double theta_rho,
                                             CollapsedBlock* out) const {
  const ThetaBlockContext ctx = make_theta_context(k, param_index);
  auto [logd, blk] = eval_theta_block(k, ctx, theta_sigma, theta_rho);
  if (out) *out = std::move(blk);
  return logd;
}

GibbsSampler::ThetaBlockResult GibbsSampler::run_theta_block(
    int k, int param_index, std::uint64_t seed) const {
  const ScaleWorkspace& sw = ws_.scales[k];
  Rng rng(seed);
  const ThetaBlockContext ctx = make_theta_context(k, param_index);

  ThetaBlockResult result;
  result.param_index = param_index;
  result.theta_sigma = ctx.cur_sigma;
  result.theta_rho = ctx.cur_rho;

  auto [logd_current, blk_current] =
      eval_theta_block(k, ctx, ctx.cur_sigma, ctx.cur_rho);
  CollapsedBlock retained = std::move(blk_current);

  if (!spec_.options.fix_thetak) {
    result.mh_attempted = true;
    const double sd =
        std::sqrt(thetak_proposals_[k - 1][param_index].step_variance);
    const double prop_sigma = ctx.cur_sigma + sd * rng.normal();
    const double prop_rho = ctx.cur_rho + sd * rng.normal();
    bool valid = true;
    double logd_prop = -std::numeric_limits<double>::infinity();
    CollapsedBlock blk_prop;
    try {
      auto ev = eval_theta_block(k, ctx, prop_sigma, prop_rho);
      logd_prop = ev.first;
      blk_prop = std::move(ev.second);
    } catch (const NotPositiveDefinite&) {
      valid = false;  // automatic reject
    }
    const double u = rng.uniform();
    if (valid && std::log(u) < logd_prop - logd_current) {
      result.accepted = true;
      result.theta_sigma = prop_sigma;
      result.theta_rho = prop_rho;
      retained = std::move(blk_prop);
    }
  }

  // paired eta_T draw, always
  const Eigen::VectorXd mean =
      retained.posterior_factor.solve(retained.posterior_shift);
  result.eta_t = retained.posterior_factor.perturb(mean, rng);

  if (result.accepted) {
    const auto& infl = sw.param_influence[param_index];
    const Eigen::VectorXd log_sigma_all =
        sw.param_at_vertices.apply(state_.theta_sigma[k - 1]);
    const Eigen::VectorXd log_rho_all =
        sw.param_at_vertices.apply(state_.theta_rho[k - 1]);
    result.patch_kappa.resize(infl.size());
    result.patch_tau.resize(infl.size());
    for (std::size_t a = 0; a < infl.size(); ++a) {
      const auto& [v, w] = infl[a];
      const double ls =
          log_sigma_all[v] + w * (result.theta_sigma - ctx.cur_sigma);
      const double lr = log_rho_all[v] + w * (result.theta_rho - ctx.cur_rho);
      const NaturalParams np = natural_nu1(ls, lr);
      result.patch_kappa[a] = std::exp(np.log_kappa);
      result.patch_tau[a] = std::exp(np.log_tau);
    }
  }
  return result;
}

void GibbsSampler::update_thetak_colour_parallel(int k,
                                                 std::uint64_t chain_seed) {
  const ScaleWorkspace& sw = ws_.scales[k];
  const auto classes = sw.theta_colours.classes();
  for (const auto& members : classes) {
    std::vector<ThetaBlockResult> results(members.size());
    parallel_for(worker_count_, static_cast<int>(members.size()), [&](int i) {
      const int param_index = members[i];
      const std::uint64_t seed = derive_seed(
          chain_seed, state_.iteration, StepTag::theta_block,
          (static_cast<std::uint64_t>(k) << 32) |
              static_cast<std::uint64_t>(param_index));
      results[i] = run_theta_block(k, param_index, seed);
    });
    // gather writes at the colour barrier, in block order
    for (const auto& res : results) {
      const int param_index = res.param_index;
      const FootprintSpec& fp = sw.footprints[param_index];
      for (std::size_t a = 0; a < fp.process_set.size(); ++a)
        state_.eta[k][fp.process_set[a]] = res.eta_t[a];
      ++stats_.theta_block_updates;
      ++stats_.eta_star_draws;
      if (res.mh_attempted) {
        thetak_proposals_[k - 1][param_index].record(res.accepted);
        acceptance_log_.push_back(
            {state_.iteration,
             "theta" + std::to_string(k) + "[" + std::to_string(param_index) +
                 "]",
             res.accepted});
        if (!res.accepted) ++stats_.eta_star_after_reject;
      }
      if (res.accepted) {
        state_.theta_sigma[k - 1][param_index] = res.theta_sigma;
        state_.theta_rho[k - 1][param_index] = res.theta_rho;
        const auto& infl = sw.param_influence[param_index];
        for (std::size_t a = 0; a < infl.size(); ++a) {
          kappa_field_[k][infl[a].first] = res.patch_kappa[a];
          tau_field_[k][infl[a].first] = res.patch_tau[a];
        }
      }
    }
  }
}

std::pair<CholeskyFactor, Eigen::VectorXd> GibbsSampler::tile_conditional(
    int k, const FootprintSpec& fp) const {
  const ScaleWorkspace& sw = ws_.scales[k];
  const std::vector<int>& t_set = fp.process_set;
  const std::vector<int> t_bar = sorted_union(t_set, fp.blanket);
  std::vector<int> t_local, blanket_local;
  {
    std::vector<char> in_t(spec_.scales[k].process_mesh->vertex_count(), 0);
    for (int v : t_set) in_t[v] = 1;
    for (std::size_t a = 0; a < t_bar.size(); ++a)
      (in_t[t_bar[a]] ? t_local : blanket_local)
          .push_back(static_cast<int>(a));
  }
  Eigen::VectorXd kap(t_bar.size()), tau(t_bar.size());
  for (std::size_t a = 0; a < t_bar.size(); ++a) {
    kap[a] = kappa_field_[k][t_bar[a]];
    tau[a] = tau_field_[k][t_bar[a]];
  }
  const SparseSymmetric q_local =
      assemble_spde_precision_local(sw.ops, t_bar, kap, tau);
  const SparseSymmetric q_tt = q_local.submatrix(t_local);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(t_set.size());
  if (!blanket_local.empty()) {
    Eigen::VectorXd eta_blanket(blanket_local.size());
    for (std::size_t a = 0; a < blanket_local.size(); ++a)
      eta_blanket[a] = state_.eta[k][t_bar[blanket_local[a]]];
    h = -(q_local.block(t_local, blanket_local) * eta_blanket);
  }

  const auto a_rows = ws_.chunks->basis_rows(k, fp.data_set);
  const Eigen::SparseMatrix<double> a_ft = column_slice(a_rows, t_set);
  Eigen::VectorXd qeps_f(fp.data_set.size());
  for (std::size_t i = 0; i < fp.data_set.size(); ++i) {
    const double sd = eps_sd_[fp.data_set[i]];
    qeps_f[i] = 1.0 / (sd * sd);
  }
  const Eigen::VectorXd z_tilde = residual_for(fp.data_set, k, t_set);

  Eigen::SparseMatrix<double> qt = q_tt.full();
  Eigen::VectorXd b = h;
  if (fp.data_set.size() > 0) {
    const Eigen::SparseMatrix<double> at = a_ft.transpose();
    qt = Eigen::SparseMatrix<double>(at * qeps_f.asDiagonal() * a_ft) + qt;
    b += at * qeps_f.cwiseProduct(z_tilde);
  }
  Eigen::SparseMatrix<double> qt_lower = qt.triangularView<Eigen::Lower>();
  return {cholesky_factorize(SparseSymmetric::from_lower(std::move(qt_lower))),
          std::move(b)};
}

void GibbsSampler::reupdate_etak_tiles(int k, std::uint64_t chain_seed) {
  const ScaleWorkspace& sw = ws_.scales[k];
  const int pos = state_.tiling_position;
  const Colouring& colours = sw.tile_colours[pos];
  const auto classes = colours.classes();
  for (const auto& members : classes) {
    std::vector<Eigen::VectorXd> draws(members.size());
    parallel_for(worker_count_, static_cast<int>(members.size()), [&](int i) {
      const int tile = members[i];
      const FootprintSpec& fp = sw.tile_footprints[pos][tile];
      auto [factor, shift] = tile_conditional(k, fp);
      const std::uint64_t seed = derive_seed(
          chain_seed, state_.iteration, StepTag::tile_update,
          (static_cast<std::uint64_t>(k) << 40) |
              (static_cast<std::uint64_t>(pos) << 32) |
              static_cast<std::uint64_t>(tile));
      Rng rng(seed);
      const Eigen::VectorXd mean = factor.solve(shift);
      draws[i] = factor.perturb(mean, rng);
    });
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto& tile_set = sw.tilings[pos].tiles[members[i]];
      for (std::size_t a = 0; a < tile_set.size(); ++a)
        state_.eta[k][tile_set[a]] = draws[i][a];
      ++stats_.tile_draws;
    }
  }
}

void GibbsSampler::update_theta_eps(std::uint64_t chain_seed) {
  if (spec_.options.fix_theta_eps) return;
  struct EpsResult {
    bool accepted = false;
    double value = 0.0;
    Eigen::VectorXd new_sd;  // over the footprint
  };
  // residuals Z - A eta at all data points, fixed during this step
  std::vector<int> all_rows(ws_.chunks->data_count());
  std::iota(all_rows.begin(), all_rows.end(), 0);
  const Eigen::VectorXd resid_all = residual_for(all_rows, -1, {});

  const auto classes = ws_.eps_colours.classes();
  const auto& b_eps = ws_.eps_basis.matrix();
  for (const auto& members : classes) {
    std::vector<EpsResult> results(members.size());
    parallel_for(worker_count_, static_cast<int>(members.size()), [&](int i) {
      const int idx = members[i];
      const auto& rows = ws_.eps_footprints[idx];
      Rng rng(derive_seed(chain_seed, state_.iteration, StepTag::theta_eps,
                          static_cast<std::uint64_t>(idx)));
      const double current = state_.theta_eps[idx];
      const double sd_step = std::sqrt(eps_proposals_[idx].step_variance);
      const double proposal = current + sd_step * rng.normal();

      // per-datum basis weight of this coefficient
      auto loglik = [&](double value) {
        double total = 0.0;
        for (int r : rows) {
          double w = 0.0;
          using Iter =
              Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
          for (Iter it(b_eps, r); it; ++it)
            if (it.col() == idx) {
              w = it.value();
              break;
            }
          const double log_sd = std::log(eps_sd_[r]) + w * (value - current);
          const double z = resid_all[r] / std::exp(log_sd);
          total += -log_sd - 0.5 * z * z - 0.5 * std::log(2.0 * M_PI);
        }
        return total;
      };
      const double logd_current =
          loglik(current) + log_prior_density(spec_.eps_prior, current);
      const double logd_prop =
          loglik(proposal) + log_prior_density(spec_.eps_prior, proposal);
      const double u = rng.uniform();
      EpsResult res;
      res.accepted = std::log(u) < logd_prop - logd_current;
      res.value = res.accepted ? proposal : current;
      if (res.accepted) {
        res.new_sd.resize(rows.size());
        for (std::size_t a = 0; a < rows.size(); ++a) {
          double w = 0.0;
          using Iter =
              Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
          for (Iter it(b_eps, rows[a]); it; ++it)
            if (it.col() == idx) {
              w = it.value();
              break;
            }
          res.new_sd[a] =
              std::exp(std::log(eps_sd_[rows[a]]) + w * (proposal - current));
        }
      }
      results[i] = std::move(res);
    });
    for (std::size_t i = 0; i < members.size(); ++i) {
      const int idx = members[i];
      const auto& res = results[i];
      eps_proposals_[idx].record(res.accepted);
      acceptance_log_.push_back(
          {state_.iteration, "theta_eps[" + std::to_string(idx) + "]",
           res.accepted});
      ++stats_.theta_eps_updates;
      if (res.accepted) {
        state_.theta_eps[idx] = res.value;
        const auto& rows = ws_.eps_footprints[idx];
        for (std::size_t a = 0; a < rows.size(); ++a)
          eps_sd_[rows[a]] = res.new_sd[a];
      }
    }
  }
}

void GibbsSampler::gibbs_sweep(std::uint64_t chain_seed) {
  stats_ = SweepStats{};
  update_eta0_theta0(chain_seed);
  for (int k = 1; k < static_cast<int>(spec_.scales.size()); ++k) {
    update_thetak_colour_parallel(k, chain_seed);
    reupdate_etak_tiles(k, chain_seed);
  }
  update_theta_eps(chain_seed);
  state_.tiling_position = (state_.tiling_position + 1) % 3;
  ++state_.iteration;
  theta0_proposal_.maybe_adapt(state_.iteration, spec_.options.adapt_every,
                               spec_.options.adapt_until);
  for (auto& group : thetak_proposals_)
    for (auto& p : group)
      p.maybe_adapt(state_.iteration, spec_.options.adapt_every,
                    spec_.options.adapt_until);
  for (auto& p : eps_proposals_)
    p.maybe_adapt(state_.iteration, spec_.options.adapt_every,
                  spec_.options.adapt_until);
}

void GibbsSampler::init_state(std::uint64_t chain_seed) {
  // parameters from their priors
  {
    Rng rng(derive_seed(chain_seed, 0, StepTag::init_theta, 0));
    if (spec_.options.fix_theta0) {
      state_.theta0[0] = spec_.scales[0].sigma_prior.omega;
      state_.theta0[1] = spec_.scales[0].rho_prior.omega;
    } else {
      state_.theta0[0] = spec_.scales[0].sigma_prior.omega +
                         std::sqrt(spec_.scales[0].sigma_prior.lambda) *
                             rng.normal();
      state_.theta0[1] =
          spec_.scales[0].rho_prior.omega +
          std::sqrt(spec_.scales[0].rho_prior.lambda) * rng.normal();
    }
  }
  for (std::size_t k = 1; k < spec_.scales.size(); ++k) {
    Rng rng(derive_seed(chain_seed, 0, StepTag::init_theta, k));
    const auto& sp = spec_.scales[k].sigma_prior;
    const auto& rp = spec_.scales[k].rho_prior;
    auto& ts = state_.theta_sigma[k - 1];
    auto& tr = state_.theta_rho[k - 1];
    for (Eigen::Index i = 0; i < ts.size(); ++i) {
      if (spec_.options.fix_thetak) {
        ts[i] = sp.omega;
        tr[i] = rp.omega;
      } else {
        ts[i] = sp.omega + std::sqrt(sp.lambda) * rng.normal();
        tr[i] = rp.omega + std::sqrt(rp.lambda) * rng.normal();
      }
    }
  }
  {
    Rng rng(derive_seed(chain_seed, 0, StepTag::init_theta, 1000));
    for (Eigen::Index i = 0; i < state_.theta_eps.size(); ++i)
      state_.theta_eps[i] =
          spec_.options.fix_theta_eps
              ? spec_.eps_prior.omega
              : spec_.eps_prior.omega +
                    std::sqrt(spec_.eps_prior.lambda) * rng.normal();
  }
  for (std::size_t k = 0; k < spec_.scales.size(); ++k)
    refresh_param_fields(static_cast<int>(k));
  refresh_eps_field();

  // eta0 from perturbed least squares on Z = A0 eta0 + eps
  {
    Rng rng(derive_seed(chain_seed, 0, StepTag::init_eta, 0));
    const auto& a0 = ws_.scales[0].basis.matrix();
    const Eigen::SparseMatrix<double> a0c = a0;
    Eigen::SparseMatrix<double> ata =
        Eigen::SparseMatrix<double>(a0c.transpose() * a0c);
    const double ridge =
        1e-8 * std::max(1.0, Eigen::VectorXd(ata.diagonal()).maxCoeff());
    Eigen::SparseMatrix<double> eye(ata.rows(), ata.cols());
    eye.setIdentity();
    ata = ata + Eigen::SparseMatrix<double>(eye * ridge);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(ata);
    const Eigen::VectorXd ls =
        solver.solve(Eigen::VectorXd(a0c.transpose() * spec_.data.values));
    state_.eta[0] =
        ls + std::sqrt(spec_.options.init_eta0_perturb_variance) *
                 rng.normal_vector(ls.size());
  }
  for (std::size_t k = 1; k < spec_.scales.size(); ++k) {
    Rng rng(derive_seed(chain_seed, 0, StepTag::init_eta, k));
    state_.eta[k] = std::sqrt(spec_.options.init_etak_variance) *
                    rng.normal_vector(state_.eta[k].size());
  }
  state_.iteration = 0;
  state_.tiling_position = 0;
}

ChainOutput run_chain(const ModelSpec& spec, const Workspace& ws,
                      long n_iterations, long burn_in, long thin,
                      std::uint64_t seed, int worker_count) {
  if (burn_in >= n_iterations)
    throw ConfigError("burn_in must be < n_iterations");
  if (thin < 1) throw ConfigError("thin must be >= 1");
  ChainOutput out;
  out.warnings = validate_spec(spec);
  GibbsSampler sampler(spec, ws, worker_count);
  sampler.init_state(seed);
  for (long i = 1; i <= n_iterations; ++i) {
    try {
      sampler.gibbs_sweep(seed);
    } catch (const std::exception& e) {
      // fatal: flush what we have plus a state dump for diagnosis
      out.error = "sweep " + std::to_string(i) + " aborted: " + e.what();
      out.last_state = sampler.state();
      break;
    }
    if (i > burn_in && (i - burn_in) % thin == 0)
      out.samples.push_back(sampler.state());
  }
  out.acceptance_log = sampler.acceptance_log();
  std::map<std::string, std::pair<long, long>> counts;
  for (const auto& rec : out.acceptance_log) {
    auto& c = counts[rec.block];
    ++c.second;
    if (rec.accepted) ++c.first;
  }
  for (const auto& [block, c] : counts)
    out.acceptance_rate[block] = double(c.first) / double(c.second);
  return out;
}

PredictiveSummary predict_at(const ModelSpec& spec,
                             const std::vector<ModelState>& samples,
                             const Eigen::MatrixXd& locations) {
  if (samples.empty()) throw EmptySet("no posterior samples");
  const Eigen::Index n = locations.rows();
  std::vector<BasisMatrix> bases;
  for (const auto& scale : spec.scales)
    bases.push_back(eval_basis_matrix(*scale.process_mesh, locations));
  const BasisMatrix eps_basis = eval_basis_matrix(*spec.eps_mesh, locations);

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd noise = Eigen::VectorXd::Zero(n);
  for (const auto& s : samples) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < bases.size(); ++k)
      y += bases[k].apply(s.eta[k]);
    sum += y;
    sumsq += y.cwiseProduct(y);
    noise +=
        eps_basis.apply(s.theta_eps).array().exp().square().matrix();
  }
  const double j = double(samples.size());
  PredictiveSummary out;
  out.mean = sum / j;
  Eigen::VectorXd var =
      (sumsq / j - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0);
  if (samples.size() > 1) var *= j / (j - 1.0);
  out.std = (var + noise / j).cwiseSqrt();
  return out;
}

void write_chain_csv(const ChainOutput& chain, const ModelSpec& spec,
                     const std::string& directory) {
  ensure_directory(directory);
  auto open = [&](const std::string& name) {
    std::ofstream out(directory + "/" + name);
    if (!out) throw std::runtime_error("cannot write " + directory + "/" + name);
    out.precision(17);
    out << "iteration,index,value\n";
    return out;
  };
  {
    auto out = open("theta0.csv");
    for (const auto& s : chain.samples)
      for (int i = 0; i < 2; ++i)
        out << s.iteration << "," << (i + 1) << "," << s.theta0[i] << "\n";
  }
  for (std::size_t k = 1; k < spec.scales.size(); ++k) {
    auto out_s = open("theta_sigma_" + std::to_string(k) + ".csv");
    auto out_r = open("theta_rho_" + std::to_string(k) + ".csv");
    for (const auto& s : chain.samples) {
      for (Eigen::Index i = 0; i < s.theta_sigma[k - 1].size(); ++i)
        out_s << s.iteration << "," << (i + 1) << ","
              << s.theta_sigma[k - 1][i] << "\n";
      for (Eigen::Index i = 0; i < s.theta_rho[k - 1].size(); ++i)
        out_r << s.iteration << "," << (i + 1) << "," << s.theta_rho[k - 1][i]
              << "\n";
    }
  }
  {
    auto out = open("theta_eps.csv");
    for (const auto& s : chain.samples)
      for (Eigen::Index i = 0; i < s.theta_eps.size(); ++i)
        out << s.iteration << "," << (i + 1) << "," << s.theta_eps[i] << "\n";
  }
  for (std::size_t k = 0; k < spec.scales.size(); ++k) {
    auto out = open("eta_" + std::to_string(k) + ".csv");
    for (const auto& s : chain.samples)
      for (Eigen::Index i = 0; i < s.eta[k].size(); ++i)
        out << s.iteration << "," << (i + 1) << "," << s.eta[k][i] << "\n";
  }
  {
    std::ofstream out(directory + "/acceptance.csv");
    out << "iteration,block,accepted\n";
    for (const auto& rec : chain.acceptance_log)
      out << rec.iteration << "," << rec.block << "," << (rec.accepted ? 1 : 0)
          << "\n";
  }
}

namespace {

// (iteration, index, value) rows grouped back into per-iteration vectors
std::map<long, Eigen::VectorXd> read_group_csv(const std::string& path,
                                               Eigen::Index expected_len) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::getline(in, line);  // header
  std::map<long, Eigen::VectorXd> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw MalformedRow(line_no, line);
    const long iter = std::stol(line.substr(0, c1));
    const long index = std::stol(line.substr(c1 + 1, c2 - c1 - 1));
    const double value = std::stod(line.substr(c2 + 1));
    auto [it, inserted] = out.try_emplace(iter);
    if (inserted) it->second = Eigen::VectorXd::Zero(expected_len);
    if (index < 1 || index > expected_len) throw MalformedRow(line_no, line);
    it->second[index - 1] = value;
  }
  return out;
}

}  // namespace

std::vector<ModelState> read_chain_csv(const ModelSpec& spec,
                                       const std::string& directory) {
  const auto theta0 = read_group_csv(directory + "/theta0.csv", 2);
  const auto theta_eps = read_group_csv(directory + "/theta_eps.csv",
                                        spec.eps_mesh->vertex_count());
  std::vector<std::map<long, Eigen::VectorXd>> eta, tsig, trho;
  for (std::size_t k = 0; k < spec.scales.size(); ++k)
    eta.push_back(read_group_csv(
        directory + "/eta_" + std::to_string(k) + ".csv",
        spec.scales[k].process_mesh->vertex_count()));
  for (std::size_t k = 1; k < spec.scales.size(); ++k) {
    const Eigen::Index r = spec.scales[k].param_mesh->vertex_count();
    tsig.push_back(read_group_csv(
        directory + "/theta_sigma_" + std::to_string(k) + ".csv", r));
    trho.push_back(read_group_csv(
        directory + "/theta_rho_" + std::to_string(k) + ".csv", r));
  }
  std::vector<ModelState> states;
  for (const auto& [iter, t0] : theta0) {
    ModelState s;
    s.iteration = iter;
    s.theta0 = t0.head<2>();
    s.theta_eps = theta_eps.at(iter);
    for (std::size_t k = 0; k < spec.scales.size(); ++k)
      s.eta.push_back(eta[k].at(iter));
    for (std::size_t k = 1; k < spec.scales.size(); ++k) {
      s.theta_sigma.push_back(tsig[k - 1].at(iter));
      s.theta_rho.push_back(trho[k - 1].at(iter));
    }
    states.push_back(std::move(s));
  }
  return states;
}

}  // namespace msgmrf
