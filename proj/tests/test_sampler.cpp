#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "msgmrf/diagnostics.hpp"
#include "msgmrf/errors.hpp"
#include "msgmrf/sampler.hpp"
#include "oracles.hpp"
#include "toy_models.hpp"

using namespace msgmrf;

TEST_SUITE("sampler") {

TEST_CASE("adaptive proposal moves toward the target rate") {
  AdaptiveProposal p;
  p.step_variance = 1.0;
  p.target_accept = 0.25;
  for (int i = 0; i < 30; ++i) p.record(true);
  p.maybe_adapt(30, 30, 2000);
  CHECK(p.step_variance > 1.0);  // accepting everything: step grows
  const double grown = p.step_variance;
  for (int i = 0; i < 30; ++i) p.record(false);
  p.maybe_adapt(60, 30, 2000);
  CHECK(p.step_variance < grown);
  // no adaptation past the cutoff
  const double frozen = p.step_variance;
  for (int i = 0; i < 30; ++i) p.record(true);
  p.maybe_adapt(2010, 30, 2000);
  CHECK(p.step_variance == frozen);
}

TEST_CASE("collapsed block density: one datum, scalar block") {
  // Z = 1, A = [1], Qeps = [1], Q0 = [1]
  const SparseSymmetric q0(1, {{0, 0, 1.0}});
  Eigen::SparseMatrix<double> a(1, 1);
  a.insert(0, 0) = 1.0;
  Eigen::VectorXd qeps(1), z(1);
  qeps << 1.0;
  z << 1.0;
  const CollapsedBlock blk = collapsed_block_logdensity(
      q0, Eigen::VectorXd::Zero(1), a, qeps, z);
  // posterior precision 2, shift 1, mean 0.5
  CHECK(blk.posterior_shift[0] == doctest::Approx(1.0));
  const Eigen::VectorXd mean = blk.posterior_factor.solve(blk.posterior_shift);
  CHECK(mean[0] == doctest::Approx(0.5));
  CHECK(std::exp(blk.posterior_factor.log_determinant()) ==
        doctest::Approx(2.0));
  // the full value is the exact Gaussian marginal N(1; 0, 2)
  const double oracle = oracles::dense_gaussian_logpdf(
      z, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 2.0));
  CHECK(blk.log_density == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("collapsed block density with empty data reduces to zero") {
  const SparseSymmetric q = assemble_ar1_precision(4, 0.5, 0.3);
  Eigen::VectorXd h(4);
  h << 0.2, -0.1, 0.0, 0.4;
  Eigen::SparseMatrix<double> a(0, 4);
  const CollapsedBlock blk = collapsed_block_logdensity(
      q, h, a, Eigen::VectorXd(), Eigen::VectorXd());
  CHECK(blk.log_density == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("collapsed block density matches dense marginalization") {
  // random prior mean (through h), random A, diagonal noise
  Rng rng(991);
  const int t = 5, f = 8;
  const SparseSymmetric q_prior = assemble_ar1_precision(t, 0.6, 0.5);
  Eigen::VectorXd h(t);
  for (int i = 0; i < t; ++i) h[i] = rng.normal();
  Eigen::MatrixXd a_dense(f, t);
  for (int i = 0; i < f; ++i)
    for (int j = 0; j < t; ++j)
      a_dense(i, j) = rng.uniform() < 0.4 ? rng.normal() : 0.0;
  Eigen::VectorXd qeps(f), z(f);
  for (int i = 0; i < f; ++i) {
    qeps[i] = 0.5 + rng.uniform();
    z[i] = rng.normal();
  }
  const CollapsedBlock blk = collapsed_block_logdensity(
      q_prior, h, a_dense.sparseView(), qeps, z);

  const Eigen::MatrixXd prior_cov = oracles::dense_inverse(q_prior.dense());
  const Eigen::VectorXd prior_mean = prior_cov * h;
  const Eigen::MatrixXd noise_cov =
      qeps.cwiseInverse().asDiagonal().toDenseMatrix();
  const double oracle = oracles::dense_marginal_loglik(
      z, a_dense, Eigen::VectorXd::Zero(f), noise_cov, prior_mean, prior_cov);
  CHECK(blk.log_density == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("gmrf block conditional") {
  const double phi = 0.8, s2 = 0.4;
  const SparseSymmetric q = assemble_ar1_precision(3, phi, s2);
  // whole-vector block: (Q, 0)
  const CanonicalGaussian all =
      gmrf_block_conditional(q, {0, 1, 2}, Eigen::VectorXd());
  CHECK(all.precision.dense().isApprox(q.dense()));
  CHECK(all.shift.norm() == doctest::Approx(0.0));

  // middle block of the AR(1): precision (1 + phi^2)/s2,
  // shift phi (eta1 + eta3)/s2
  Eigen::VectorXd rest(2);
  rest << 0.7, -0.2;
  const CanonicalGaussian mid = gmrf_block_conditional(q, {1}, rest);
  CHECK(mid.precision.dense()(0, 0) ==
        doctest::Approx((1.0 + phi * phi) / s2));
  CHECK(mid.shift[0] == doctest::Approx(phi * (0.7 - 0.2) / s2));

  // conditional mean matches the dense formula on random SPD matrices
  Rng rng(55);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd m(10, 10);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) m(i, j) = rng.normal();
    Eigen::MatrixXd spd = m * m.transpose() +
                          10.0 * Eigen::MatrixXd::Identity(10, 10);
    const SparseSymmetric qs = SparseSymmetric::from_dense(spd);
    const std::vector<int> block = {1, 4, 5};
    std::vector<int> rest_idx;
    for (int i = 0; i < 10; ++i)
      if (i != 1 && i != 4 && i != 5) rest_idx.push_back(i);
    Eigen::VectorXd eta_rest(rest_idx.size());
    for (std::size_t i = 0; i < rest_idx.size(); ++i)
      eta_rest[i] = rng.normal();
    const CanonicalGaussian g = gmrf_block_conditional(qs, block, eta_rest);
    const Eigen::VectorXd mean =
        oracles::dense_inverse(g.precision.dense()) * g.shift;
    // dense: mu = -Qtt^-1 Qtr eta_rest
    Eigen::MatrixXd qtt(3, 3), qtr(3, rest_idx.size());
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) qtt(i, j) = spd(block[i], block[j]);
      for (std::size_t j = 0; j < rest_idx.size(); ++j)
        qtr(i, j) = spd(block[i], rest_idx[j]);
    }
    const Eigen::VectorXd expect =
        -oracles::dense_inverse(qtt) * qtr * eta_rest;
    CHECK(mean.isApprox(expect, 1e-9));
  }
  CHECK_THROWS_AS(gmrf_block_conditional(q, {}, Eigen::VectorXd::Zero(3)),
                  IndexOutOfRange);
}

TEST_CASE("collapsed theta0 density matches the dense marginal likelihood") {
  toys::ToyConfig cfg;
  cfg.fine_spacing = 0.1;
  cfg.n_data = 20;
  cfg.fix_parameters = false;
  const ModelSpec spec = toys::make_1d_two_scale(cfg);
  const Workspace ws = build_workspace(spec);
  GibbsSampler sampler(spec, ws, 1);
  sampler.init_state(17);

  // dense oracle pieces that do not depend on theta0
  const auto& coarse = *spec.scales[0].process_mesh;
  const FemOperators ops0 = assemble_fem_operators(coarse);
  const Eigen::MatrixXd a0 = Eigen::MatrixXd(
      eval_basis_matrix(coarse, spec.data.locations).matrix());
  const Eigen::VectorXd qeps = sampler.qeps_all();
  Eigen::VectorXd z_tilde = spec.data.values;
  z_tilde -= eval_basis_matrix(*spec.scales[1].process_mesh,
                               spec.data.locations)
                 .apply(sampler.state().eta[1]);
  const Eigen::MatrixXd noise_cov =
      qeps.cwiseInverse().asDiagonal().toDenseMatrix();

  auto oracle_at = [&](const Eigen::Vector2d& theta0) {
    const NaturalParams np = natural_nu1(theta0[0], theta0[1]);
    const Eigen::Index r0 = coarse.vertex_count();
    const Eigen::MatrixXd q0 =
        assemble_spde_precision(
            ops0, Eigen::VectorXd::Constant(r0, std::exp(np.log_kappa)),
            Eigen::VectorXd::Constant(r0, std::exp(np.log_tau)))
            .dense();
    return oracles::dense_marginal_loglik(
               z_tilde, a0, Eigen::VectorXd::Zero(z_tilde.size()), noise_cov,
               Eigen::VectorXd::Zero(r0), oracles::dense_inverse(q0)) +
           log_prior_density(spec.scales[0].sigma_prior, theta0[0]) +
           log_prior_density(spec.scales[0].rho_prior, theta0[1]);
  };

  Rng rng(313);
  Eigen::Vector2d base(std::log(1.0), std::log(0.6));
  for (int pair = 0; pair < 21; ++pair) {
    Eigen::Vector2d t1 = base, t2 = base;
    t1 += 0.4 * Eigen::Vector2d(rng.normal(), rng.normal());
    t2 += 0.4 * Eigen::Vector2d(rng.normal(), rng.normal());
    const double got = sampler.collapsed_theta0_logdensity(t1, nullptr) -
                       sampler.collapsed_theta0_logdensity(t2, nullptr);
    const double want = oracle_at(t1) - oracle_at(t2);
    CHECK(got == doctest::Approx(want).epsilon(1e-6));
    // absolute values agree too since all constants are kept
    CHECK(sampler.collapsed_theta0_logdensity(t1, nullptr) ==
          doctest::Approx(oracle_at(t1)).epsilon(1e-8));
  }
}

TEST_CASE("theta-k block density matches dense integration over eta_T") {
  toys::ToyConfig cfg;
  cfg.fine_spacing = 1.0 / 12.0;  // 13 fine vertices
  cfg.coarse_spacing = 0.25;
  cfg.n_data = 25;
  cfg.fix_parameters = false;
  const ModelSpec spec = toys::make_1d_two_scale(cfg);
  const Workspace ws = build_workspace(spec);
  GibbsSampler sampler(spec, ws, 1);
  sampler.init_state(99);
  const ModelState& st = sampler.state();

  const int k = 1;
  const auto& fine = *spec.scales[1].process_mesh;
  const FemOperators ops1 = assemble_fem_operators(fine);
  const BasisMatrix p_at_v =
      eval_basis_matrix(*spec.scales[1].param_mesh, fine.vertices());
  const BasisMatrix a1 = eval_basis_matrix(fine, spec.data.locations);
  const BasisMatrix a0 = eval_basis_matrix(*spec.scales[0].process_mesh,
                                           spec.data.locations);
  const Eigen::VectorXd qeps = sampler.qeps_all();

  auto oracle_at = [&](int param_index, double tsig, double trho) {
    // field with coefficient param_index replaced
    Eigen::VectorXd ts = st.theta_sigma[0];
    Eigen::VectorXd tr = st.theta_rho[0];
    ts[param_index] = tsig;
    tr[param_index] = trho;
    const Eigen::VectorXd lsig = p_at_v.apply(ts);
    const Eigen::VectorXd lrho = p_at_v.apply(tr);
    Eigen::VectorXd kap(fine.vertex_count()), tau(fine.vertex_count());
    for (Eigen::Index v = 0; v < fine.vertex_count(); ++v) {
      const NaturalParams np = natural_nu1(lsig[v], lrho[v]);
      kap[v] = std::exp(np.log_kappa);
      tau[v] = std::exp(np.log_tau);
    }
    const Eigen::MatrixXd q1 =
        assemble_spde_precision(ops1, kap, tau).dense();

    const auto& fp = ws.scales[1].footprints[param_index];
    const auto& t_set = fp.process_set;
    std::vector<int> rest;
    for (int v = 0; v < fine.vertex_count(); ++v)
      if (std::find(t_set.begin(), t_set.end(), v) == t_set.end())
        rest.push_back(v);
    // prior conditional of eta_T given the rest under the replaced field
    Eigen::MatrixXd qtt(t_set.size(), t_set.size());
    Eigen::MatrixXd qtr(t_set.size(), rest.size());
    for (std::size_t i = 0; i < t_set.size(); ++i) {
      for (std::size_t j = 0; j < t_set.size(); ++j)
        qtt(i, j) = q1(t_set[i], t_set[j]);
      for (std::size_t j = 0; j < rest.size(); ++j)
        qtr(i, j) = q1(t_set[i], rest[j]);
    }
    Eigen::VectorXd eta_rest(rest.size());
    for (std::size_t j = 0; j < rest.size(); ++j)
      eta_rest[j] = st.eta[1][rest[j]];
    const Eigen::MatrixXd prior_cov = oracles::dense_inverse(qtt);
    const Eigen::VectorXd prior_mean = -prior_cov * qtr * eta_rest;

    // likelihood over the data footprint
    const auto& f_set = fp.data_set;
    Eigen::MatrixXd a_ft(f_set.size(), t_set.size());
    Eigen::VectorXd offset(f_set.size()), z_f(f_set.size());
    Eigen::MatrixXd noise_cov =
        Eigen::MatrixXd::Zero(f_set.size(), f_set.size());
    const Eigen::MatrixXd a1d = Eigen::MatrixXd(a1.matrix());
    const Eigen::MatrixXd a0d = Eigen::MatrixXd(a0.matrix());
    for (std::size_t i = 0; i < f_set.size(); ++i) {
      const int row = f_set[i];
      z_f[i] = spec.data.values[row];
      noise_cov(i, i) = 1.0 / qeps[row];
      for (std::size_t j = 0; j < t_set.size(); ++j)
        a_ft(i, j) = a1d(row, t_set[j]);
      double off = a0d.row(row).dot(st.eta[0]);
      for (std::size_t j = 0; j < rest.size(); ++j)
        off += a1d(row, rest[j]) * st.eta[1][rest[j]];
      offset[i] = off;
    }
    return oracles::dense_marginal_loglik(z_f, a_ft, offset, noise_cov,
                                          prior_mean, prior_cov) +
           log_prior_density(spec.scales[1].sigma_prior, tsig) +
           log_prior_density(spec.scales[1].rho_prior, trho);
  };

  Rng rng(7);
  for (int param_index = 0;
       param_index < spec.scales[1].param_mesh->vertex_count(); ++param_index)
    for (int pair = 0; pair < 7; ++pair) {
      const double s1 = st.theta_sigma[0][param_index] + 0.3 * rng.normal();
      const double r1 = st.theta_rho[0][param_index] + 0.3 * rng.normal();
      const double s2 = st.theta_sigma[0][param_index] + 0.3 * rng.normal();
      const double r2 = st.theta_rho[0][param_index] + 0.3 * rng.normal();
      const double got =
          sampler.thetak_block_logdensity(k, param_index, s1, r1) -
          sampler.thetak_block_logdensity(k, param_index, s2, r2);
      const double want =
          oracle_at(param_index, s1, r1) - oracle_at(param_index, s2, r2);
      CHECK(got == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("whole-domain collapsed density equals the theta0 (Eq. 8) path") {
  toys::ToyConfig cfg;
  cfg.fine_spacing = 0.1;
  cfg.n_data = 30;
  cfg.fix_parameters = false;
  const ModelSpec two_scale = toys::make_1d_two_scale(cfg);

  ModelSpec k0;
  k0.K = 0;
  k0.scales.resize(1);
  k0.scales[0].process_mesh = two_scale.scales[1].process_mesh;
  k0.scales[0].sigma_prior = two_scale.scales[1].sigma_prior;
  k0.scales[0].rho_prior = two_scale.scales[1].rho_prior;
  k0.eps_mesh = two_scale.eps_mesh;
  k0.eps_prior = two_scale.eps_prior;
  k0.data = two_scale.data;
  k0.options = two_scale.options;
  const Workspace ws = build_workspace(k0);
  GibbsSampler sampler(k0, ws, 1);
  sampler.init_state(3);

  const auto& mesh = *k0.scales[0].process_mesh;
  const Eigen::Index r = mesh.vertex_count();
  const FemOperators ops = assemble_fem_operators(mesh);
  const Eigen::SparseMatrix<double> a =
      eval_basis_matrix(mesh, k0.data.locations).matrix();
  for (const auto theta : {Eigen::Vector2d(std::log(0.5), std::log(0.2)),
                           Eigen::Vector2d(std::log(0.9), std::log(0.4))}) {
    const NaturalParams np = natural_nu1(theta[0], theta[1]);
    const SparseSymmetric q = assemble_spde_precision(
        ops, Eigen::VectorXd::Constant(r, std::exp(np.log_kappa)),
        Eigen::VectorXd::Constant(r, std::exp(np.log_tau)));
    const CollapsedBlock direct = collapsed_block_logdensity(
        q, Eigen::VectorXd::Zero(r), a, sampler.qeps_all(), k0.data.values);
    const double via_theta0 =
        sampler.collapsed_theta0_logdensity(theta, nullptr) -
        log_prior_density(k0.scales[0].sigma_prior, theta[0]) -
        log_prior_density(k0.scales[0].rho_prior, theta[1]);
    CHECK(via_theta0 == doctest::Approx(direct.log_density).epsilon(1e-8));
  }
}

TEST_CASE("eta0 draws follow the exact conjugate posterior (K = 0)") {
  toys::ToyConfig cfg;
  cfg.coarse_spacing = 0.25;
  cfg.n_data = 40;
  const ModelSpec two_scale = toys::make_1d_two_scale(cfg);
  ModelSpec spec;
  spec.K = 0;
  spec.scales.resize(1);
  spec.scales[0] = two_scale.scales[0];
  spec.eps_mesh = two_scale.eps_mesh;
  spec.eps_prior = {std::log(cfg.noise_sd), 1e-12};
  spec.data = two_scale.data;
  spec.options = two_scale.options;
  spec.options.fix_theta0 = true;
  spec.options.fix_theta_eps = true;

  const Workspace ws = build_workspace(spec);
  GibbsSampler sampler(spec, ws, 1);
  sampler.init_state(21);

  // dense conjugate posterior at the fixed parameters
  const auto& mesh = *spec.scales[0].process_mesh;
  const Eigen::Index r0 = mesh.vertex_count();
  const FemOperators ops = assemble_fem_operators(mesh);
  const NaturalParams np = natural_nu1(spec.scales[0].sigma_prior.omega,
                                       spec.scales[0].rho_prior.omega);
  const Eigen::MatrixXd q0 =
      assemble_spde_precision(
          ops, Eigen::VectorXd::Constant(r0, std::exp(np.log_kappa)),
          Eigen::VectorXd::Constant(r0, std::exp(np.log_tau)))
          .dense();
  const Eigen::MatrixXd a = Eigen::MatrixXd(
      eval_basis_matrix(mesh, spec.data.locations).matrix());
  const double noise_var = std::exp(2.0 * spec.eps_prior.omega);
  const Eigen::MatrixXd qt = q0 + a.transpose() * a / noise_var;
  const Eigen::MatrixXd cov = oracles::dense_inverse(qt);
  const Eigen::VectorXd mean =
      cov * (a.transpose() * spec.data.values / noise_var);

  const int n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(r0);
  Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(r0);
  for (int i = 0; i < n; ++i) {
    sampler.update_eta0_theta0(777);
    sampler.mutable_state().iteration++;
    const Eigen::VectorXd& eta = sampler.state().eta[0];
    sum += eta;
    sumsq += eta.cwiseProduct(eta);
  }
  for (Eigen::Index v = 0; v < r0; ++v) {
    const double m = sum[v] / n;
    const double var = sumsq[v] / n - m * m;
    const double se_mean = std::sqrt(cov(v, v) / n);
    const double se_var = cov(v, v) * std::sqrt(2.0 / n);
    CHECK(std::abs(m - mean[v]) < 3.0 * se_mean);
    CHECK(std::abs(var - cov(v, v)) < 3.0 * se_var);
  }
}

TEST_CASE("sweep instrumentation: pairing, rejections, tiling cycle") {
  toys::ToyConfig cfg;
  cfg.fix_parameters = false;
  cfg.n_data = 50;
  const ModelSpec spec = toys::make_1d_two_scale(cfg);
  const Workspace ws = build_workspace(spec);
  GibbsSampler sampler(spec, ws, 1);
  sampler.init_state(31);
  long rejected_with_draw = 0;
  for (int i = 0; i < 40; ++i) {
    const int pos_before = sampler.state().tiling_position;
    sampler.gibbs_sweep(31);
    CHECK(sampler.state().tiling_position == (pos_before + 1) % 3);
    const SweepStats& stats = sampler.last_stats();
    CHECK(stats.theta_block_updates == stats.eta_star_draws);
    CHECK(stats.theta_block_updates ==
          spec.scales[1].param_mesh->vertex_count());
    CHECK(stats.tile_draws > 0);
    rejected_with_draw += stats.eta_star_after_reject;
  }
  CHECK(rejected_with_draw > 0);  // eta_T is drawn even on rejection
}

TEST_CASE("theta0 acceptance settles into a healthy band") {
  toys::ToyConfig cfg;
  cfg.coarse_spacing = 0.25;
  cfg.n_data = 40;
  const ModelSpec two_scale = toys::make_1d_two_scale(cfg);
  ModelSpec spec;
  spec.K = 0;
  spec.scales.resize(1);
  spec.scales[0].process_mesh = two_scale.scales[0].process_mesh;
  spec.scales[0].sigma_prior = prior_from_quantiles(0.3, 3.0);
  spec.scales[0].rho_prior = prior_from_quantiles(0.2, 2.0);
  spec.eps_mesh = two_scale.eps_mesh;
  spec.eps_prior = {std::log(cfg.noise_sd), 1e-12};
  spec.data = two_scale.data;
  spec.options.fix_theta_eps = true;
  const Workspace ws = build_workspace(spec);
  GibbsSampler sampler(spec, ws, 1);
  sampler.init_state(8);
  for (int i = 0; i < 10000; ++i) sampler.gibbs_sweep(8);
  long accepted = 0, total = 0;
  for (const auto& rec : sampler.acceptance_log()) {
    if (rec.iteration < 2000) continue;  // adaptation window
    ++total;
    if (rec.accepted) ++accepted;
  }
  const double rate = double(accepted) / double(total);
  CHECK(rate > 0.1);
  CHECK(rate < 0.6);
}

TEST_CASE("theta_eps: no-data coefficient samples its prior; data pulls "
          "the field to the truth") {
  auto eps_mesh = std::make_shared<Mesh>(
      build_grid_mesh(1, {0.0, 1.0, 0.0, 0.0}, 0.5));
  auto proc = std::make_shared<Mesh>(
      build_grid_mesh(1, {0.0, 1.0, 0.0, 0.0}, 0.25));
  ModelSpec spec;
  spec.K = 0;
  spec.scales.resize(1);
  spec.scales[0].process_mesh = proc;
  spec.scales[0].sigma_prior = {0.0, 1e-12};
  spec.scales[0].rho_prior = {std::log(0.5), 1e-12};
  spec.eps_mesh = eps_mesh;
  spec.eps_prior = {std::log(0.2), 0.25};
  spec.options.fix_theta0 = true;
  const double true_c = std::log(0.35);
  Rng rng(4242);
  const long m = 10000;
  spec.data.locations.resize(m, 1);
  spec.data.values.resize(m);
  for (long i = 0; i < m; ++i) {
    spec.data.locations(i, 0) = 0.55 + 0.45 * rng.uniform();
    spec.data.values[i] = std::exp(true_c) * rng.normal();
  }
  const Workspace ws = build_workspace(spec);
  CHECK(ws.eps_footprints[0].empty());

  GibbsSampler sampler(spec, ws, 1);
  sampler.init_state(77);
  sampler.mutable_state().eta[0].setZero();
  std::vector<double> no_data_trace, field_at_data;
  const BasisMatrix b_eps = eval_basis_matrix(
      *eps_mesh, Eigen::MatrixXd::Constant(1, 1, 0.8));
  for (int i = 0; i < 20000; ++i) {
    sampler.mutable_state().iteration++;
    sampler.update_theta_eps(55);
    if (i >= 2000 && i % 10 == 0) {
      no_data_trace.push_back(sampler.state().theta_eps[0]);
      field_at_data.push_back(b_eps.apply(sampler.state().theta_eps)[0]);
    }
  }
  // the no-data coefficient follows its prior (two-sample KS at 1%)
  Rng prior_rng(11);
  std::vector<double> prior_draws;
  for (std::size_t i = 0; i < no_data_trace.size(); ++i)
    prior_draws.push_back(spec.eps_prior.omega +
                          std::sqrt(spec.eps_prior.lambda) *
                              prior_rng.normal());
  const double d = oracles::ks_statistic(no_data_trace, prior_draws);
  ChainTrace t;
  t.values = Eigen::Map<Eigen::VectorXd>(no_data_trace.data(),
                                         no_data_trace.size());
  t.label = "theta_eps0";
  const double n_eff = effective_sample_size(t);
  CHECK(d < oracles::ks_critical(0.01, static_cast<std::size_t>(n_eff),
                                 prior_draws.size()));

  // the log-sd field near the data approaches the generating value
  const auto fm = oracles::moments(field_at_data);
  CHECK(fm.mean == doctest::Approx(true_c).epsilon(0.15));
}

TEST_CASE("theta_eps updates with disjoint footprints are independent") {
  auto eps_mesh = std::make_shared<Mesh>(
      build_grid_mesh(1, {0.0, 1.0, 0.0, 0.0}, 0.5));
  auto proc = std::make_shared<Mesh>(
      build_grid_mesh(1, {0.0, 1.0, 0.0, 0.0}, 0.25));
  ModelSpec spec;
  spec.K = 0;
  spec.scales.resize(1);
  spec.scales[0].process_mesh = proc;
  spec.scales[0].sigma_prior = {0.0, 1e-12};
  spec.scales[0].rho_prior = {std::log(0.5), 1e-12};
  spec.eps_mesh = eps_mesh;
  spec.eps_prior = {std::log(0.2), 0.25};
  spec.options.fix_theta0 = true;
  Rng rng(5);
  spec.data.locations.resize(40, 1);
  spec.data.values.resize(40);
  for (int i = 0; i < 40; ++i) {
    // left and right clusters so coefficients 0 and 2 have disjoint data
    spec.data.locations(i, 0) =
        (i % 2 == 0) ? 0.2 * rng.uniform() : 0.8 + 0.2 * rng.uniform();
    spec.data.values[i] = 0.3 * rng.normal();
  }
  const Workspace ws = build_workspace(spec);
  GibbsSampler a(spec, ws, 1), b(spec, ws, 1);
  a.init_state(1);
  b.init_state(1);
  b.mutable_state().theta_eps[2] += 0.9;
  ModelState sb = b.state();
  b.set_state(sb);  // refresh cached noise sds
  a.mutable_state().iteration = 10;
  b.mutable_state().iteration = 10;
  a.update_theta_eps(123);
  b.update_theta_eps(123);
  CHECK(a.state().theta_eps[0] == b.state().theta_eps[0]);
}

TEST_CASE("run_chain: retention counting and determinism across workers") {
  toys::ToyConfig cfg;
  cfg.fix_parameters = false;
  cfg.n_data = 40;
  const ModelSpec spec = toys::make_1d_two_scale(cfg);
  const Workspace ws = build_workspace(spec);
  const ChainOutput c1 = run_chain(spec, ws, 10, 5, 2, 2024, 1);
  CHECK(c1.samples.size() == 2);

  const ChainOutput c2 = run_chain(spec, ws, 10, 5, 2, 2024, 1);
  const ChainOutput c4 = run_chain(spec, ws, 10, 5, 2, 2024, 4);
  REQUIRE(c2.samples.size() == c1.samples.size());
  REQUIRE(c4.samples.size() == c1.samples.size());
  for (std::size_t i = 0; i < c1.samples.size(); ++i) {
    CHECK(c1.samples[i].theta0 == c2.samples[i].theta0);
    CHECK(c1.samples[i].theta0 == c4.samples[i].theta0);
    for (int k = 0; k < 2; ++k) {
      CHECK(c1.samples[i].eta[k] == c2.samples[i].eta[k]);
      CHECK(c1.samples[i].eta[k] == c4.samples[i].eta[k]);
    }
    CHECK(c1.samples[i].theta_eps == c4.samples[i].theta_eps);
    CHECK(c1.samples[i].theta_sigma[0] == c4.samples[i].theta_sigma[0]);
    CHECK(c1.samples[i].theta_rho[0] == c4.samples[i].theta_rho[0]);
  }
  CHECK_THROWS_AS(run_chain(spec, ws, 5, 5, 1, 1, 1), ConfigError);
}

TEST_CASE("file-backed chunks reproduce the in-memory chain exactly") {
  toys::ToyConfig cfg;
  cfg.fix_parameters = false;
  cfg.n_data = 30;
  const ModelSpec spec = toys::make_1d_two_scale(cfg);
  const Workspace ws_mem = build_workspace(spec);
  {
    std::vector<const BasisMatrix*> bases;
    for (const auto& sw : ws_mem.scales) bases.push_back(&sw.basis);
    FileBackedChunks::save(spec.data.values, bases, "chunk_cache_test");
  }
  auto file_chunks = std::make_shared<FileBackedChunks>("chunk_cache_test");
  const Workspace ws_file = build_workspace(spec, file_chunks);
  const ChainOutput a = run_chain(spec, ws_mem, 6, 2, 1, 77, 1);
  const ChainOutput b = run_chain(spec, ws_file, 6, 2, 1, 77, 1);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].eta[1] == b.samples[i].eta[1]);
    CHECK(a.samples[i].theta_sigma[0] == b.samples[i].theta_sigma[0]);
  }
  std::filesystem::remove_all("chunk_cache_test");
}

TEST_CASE("footprint enlargement does not shift the target noticeably") {
  toys::ToyConfig cfg;
  cfg.fix_parameters = false;
  cfg.n_data = 60;
  ModelSpec spec0 = toys::make_1d_two_scale(cfg);
  ModelSpec spec1 = spec0;
  spec1.options.footprint_rings = 1;
  const Workspace ws0 = build_workspace(spec0);
  const Workspace ws1 = build_workspace(spec1);
  for (std::size_t i = 0; i < ws0.scales[1].footprints.size(); ++i)
    CHECK(ws1.scales[1].footprints[i].process_set.size() >
          ws0.scales[1].footprints[i].process_set.size());

  auto run_mean = [&](const ModelSpec& spec, const Workspace& ws, double* se) {
    const ChainOutput chain = run_chain(spec, ws, 4000, 1000, 1, 99, 1);
    ChainTrace t;
    t.label = "theta_rho_mid";
    t.values.resize(chain.samples.size());
    for (std::size_t i = 0; i < chain.samples.size(); ++i)
      t.values[i] = chain.samples[i].theta_rho[0][1];
    std::vector<double> vals(t.values.data(),
                             t.values.data() + t.values.size());
    const auto m = oracles::moments(vals);
    *se = std::sqrt(m.variance / effective_sample_size(t));
    return m.mean;
  };
  double se0 = 0.0, se1 = 0.0;
  const double m0 = run_mean(spec0, ws0, &se0);
  const double m1 = run_mean(spec1, ws1, &se1);
  CHECK(std::abs(m0 - m1) < 3.0 * std::sqrt(se0 * se0 + se1 * se1));
}

TEST_CASE("fatal sweep errors abort with partial output") {
  toys::ToyConfig cfg;
  const ModelSpec good = toys::make_1d_two_scale(cfg);
  ModelSpec broken = good;
  // a range prior this extreme drives kappa to numerical zero, which the
  // precision assembly rejects
  broken.scales[1].rho_prior = {1e4, 1e-12};
  broken.options.fix_thetak = true;
  const Workspace ws = build_workspace(broken);
  const ChainOutput out = run_chain(broken, ws, 8, 2, 1, 5, 1);
  CHECK(out.failed());
  CHECK(out.error.find("sweep 1") != std::string::npos);
  CHECK(out.samples.empty());
  CHECK(out.last_state.eta.size() == 2);
}

TEST_CASE("spec validation warns on guideline violations") {
  toys::ToyConfig cfg;
  ModelSpec spec = toys::make_1d_two_scale(cfg);
  spec.options.guideline_scale = 1.0;  // desk meshes are far below 1e4
  const auto warnings = validate_spec(spec);
  bool r0_warning = false, ratio_warning = false;
  for (const auto& w : warnings) {
    if (w.find("r_eta0") != std::string::npos) r0_warning = true;
    if (w.find("x100 guideline") != std::string::npos) ratio_warning = true;
  }
  CHECK(r0_warning);
  CHECK(ratio_warning);

  ModelSpec inverted = spec;
  std::swap(inverted.scales[0].process_mesh, inverted.scales[1].process_mesh);
  bool refine_warning = false;
  for (const auto& w : validate_spec(inverted))
    if (w.find("refine") != std::string::npos) refine_warning = true;
  CHECK(refine_warning);
}

TEST_CASE("predict_at composes scales and adds measurement noise") {
  toys::ToyConfig cfg;
  const ModelSpec spec = toys::make_1d_two_scale(cfg);
  ModelState s;
  s.eta.resize(2);
  s.eta[0] =
      Eigen::VectorXd::Ones(spec.scales[0].process_mesh->vertex_count());
  s.eta[1] =
      Eigen::VectorXd::Zero(spec.scales[1].process_mesh->vertex_count());
  s.theta_sigma.resize(1);
  s.theta_rho.resize(1);
  s.theta_eps =
      Eigen::VectorXd::Constant(spec.eps_mesh->vertex_count(), std::log(0.2));
  Eigen::MatrixXd at(1, 1);
  at << 0.37;
  const PredictiveSummary pred = predict_at(spec, {s, s}, at);
  // identical samples: mean is the field value, std is the noise sd
  CHECK(pred.mean[0] == doctest::Approx(1.0));
  CHECK(pred.std[0] == doctest::Approx(0.2));
}

}  // TEST_SUITE
