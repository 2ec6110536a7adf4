#include "msgmrf/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>

#include "msgmrf/diagnostics.hpp"
#include "msgmrf/errors.hpp"
#include "msgmrf/parallel.hpp"
#include "msgmrf/params.hpp"
#include "msgmrf/rng.hpp"

namespace msgmrf {

namespace {

Eigen::VectorXd draw_block(const SparseSymmetric& q,
                           const std::vector<int>& block,
                           const Eigen::VectorXd& eta, Rng& rng) {
  std::vector<char> in_block(q.dim(), 0);
  for (int v : block) in_block[v] = 1;
  Eigen::VectorXd rest(q.dim() - block.size());
  Eigen::Index pos = 0;
  for (int v = 0; v < q.dim(); ++v)
    if (!in_block[v]) rest[pos++] = eta[v];
  const CanonicalGaussian g = gmrf_block_conditional(q, block, rest);
  const CholeskyFactor factor = cholesky_factorize(g.precision);
  const Eigen::VectorXd mean = factor.solve(g.shift);
  return factor.perturb(mean, rng);
}

void scatter(Eigen::VectorXd& eta, const std::vector<int>& block,
             const Eigen::VectorXd& values) {
  for (std::size_t a = 0; a < block.size(); ++a) eta[block[a]] = values[a];
}

std::vector<int> range_block(int lo, int hi) {  // [lo, hi] inclusive
  std::vector<int> out(hi - lo + 1);
  std::iota(out.begin(), out.end(), lo);
  return out;
}

}  // namespace

TilingStudyReport run_tiling_study(const TilingStudyConfig& config) {
  const SparseSymmetric q =
      assemble_ar1_precision(config.n, config.phi, config.sigma_v_sq);
  const CholeskyFactor q_factor = cholesky_factorize(q);
  // exact marginal variance of the tracked coefficient
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(config.n);
  unit[config.tracked_index] = 1.0;
  TilingStudyReport report;
  report.exact_variance = q_factor.solve(unit)[config.tracked_index];

  const int mid1 = static_cast<int>(config.n / 2);  // 49 of 99, 1-based
  const std::vector<int> t11 = range_block(0, mid1 - 1);
  const std::vector<int> t12 = range_block(mid1, static_cast<int>(config.n) - 1);
  const int third = static_cast<int>(config.n / 3);
  const std::vector<int> t21 = range_block(0, third - 1);
  const std::vector<int> t22 = range_block(third, 2 * third - 1);
  const std::vector<int> t23 =
      range_block(2 * third, static_cast<int>(config.n) - 1);

  auto run_sampler = [&](bool alternating, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::VectorXd eta =
        q_factor.perturb(Eigen::VectorXd::Zero(config.n), rng);
    std::vector<double> trace;
    trace.reserve(config.iterations);
    for (long i = 1; i <= config.iterations; ++i) {
      const bool odd = (i % 2) == 1;
      if (!alternating || odd) {
        scatter(eta, t11, draw_block(q, t11, eta, rng));
        scatter(eta, t12, draw_block(q, t12, eta, rng));
      } else {
        scatter(eta, t21, draw_block(q, t21, eta, rng));
        scatter(eta, t22, draw_block(q, t22, eta, rng));
        scatter(eta, t23, draw_block(q, t23, eta, rng));
      }
      trace.push_back(eta[config.tracked_index]);
    }
    // last keep_last iterations, thinned
    const long start = config.iterations - config.keep_last;
    ChainTrace kept;
    kept.values.resize(config.keep_last);
    for (long i = 0; i < config.keep_last; ++i)
      kept.values[i] = trace[start + i];
    return thin(kept, config.thin_factor);
  };

  const ChainTrace fixed = run_sampler(false, mix64(config.seed ^ 0x51));
  const ChainTrace alternating = run_sampler(true, mix64(config.seed ^ 0x52));
  report.acf_fixed = autocorrelation(fixed, config.acf_max_lag);
  report.acf_alternating =
      autocorrelation(alternating, config.acf_max_lag);
  auto variance = [](const ChainTrace& t) {
    const double mean = t.values.mean();
    return (t.values.array() - mean).square().sum() /
           double(t.values.size() - 1);
  };
  report.var_fixed = variance(fixed);
  report.var_alternating = variance(alternating);
  return report;
}

void write_tiling_study_csv(const TilingStudyReport& report,
                          const std::string& directory) {
  ensure_directory(directory);
  std::ofstream out(directory + "/acf.csv");
  out << "lag,sampler1,sampler2\n";
  out.precision(10);
  for (Eigen::Index t = 0; t < report.acf_fixed.size(); ++t)
    out << t << "," << report.acf_fixed[t] << ","
        << report.acf_alternating[t] << "\n";
  std::ofstream summary(directory + "/variance.csv");
  summary << "sampler,variance,exact\n";
  summary.precision(10);
  summary << "1," << report.var_fixed << "," << report.exact_variance << "\n";
  summary << "2," << report.var_alternating << "," << report.exact_variance
          << "\n";
}

namespace {

struct DiscretizationAccumulator {
  double rmspe_dense = 0.0, rmspe_gap = 0.0;
  double crps_dense = 0.0, crps_gap = 0.0;
  void add(const PredictiveSummary& dense_pred,
           const Eigen::VectorXd& dense_truth,
           const PredictiveSummary& gap_pred,
           const Eigen::VectorXd& gap_truth) {
    rmspe_dense += rmspe(dense_pred, dense_truth);
    rmspe_gap += rmspe(gap_pred, gap_truth);
    crps_dense += mean_crps(dense_pred, dense_truth);
    crps_gap += mean_crps(gap_pred, gap_truth);
  }
};

Eigen::MatrixXd exp_sum_covariance(const Eigen::VectorXd& a,
                                   const Eigen::VectorXd& b,
                                   const DiscretizationStudyConfig& cfg) {
  Eigen::MatrixXd c(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const double h = std::abs(a[i] - b[j]);
      c(i, j) = cfg.sigma0_sq * std::exp(-h / cfg.range0) +
                cfg.sigma1_sq * std::exp(-h / cfg.range1);
    }
  return c;
}

}  // namespace

DiscretizationStudyReport run_discretization_study(const DiscretizationStudyConfig& cfg) {
  for (double d0 : cfg.delta0_grid)
    for (double d1 : cfg.delta1_grid)
      if (!(d1 < d0))
        throw ConfigError("discretization grid requires delta1 < delta0");

  const int n_cells = static_cast<int>(cfg.delta0_grid.size() *
                                       cfg.delta1_grid.size());
  // per-replicate score slots so the reduction order is fixed
  std::vector<std::vector<DiscretizationAccumulator>> cell_scores(
      cfg.replicates, std::vector<DiscretizationAccumulator>(n_cells));
  std::vector<DiscretizationAccumulator> oracle_scores(cfg.replicates);

  parallel_for(cfg.workers, cfg.replicates, [&](int rep) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(rep),
                        StepTag::experiment, 0));
    const double gap_left = (1.0 - cfg.gap_width) * rng.uniform();
    auto outside_gap = [&]() {
      const double u = (1.0 - cfg.gap_width) * rng.uniform();
      return u < gap_left ? u : u + cfg.gap_width;
    };
    const int n_out = 1000, n_in = 100;
    Eigen::VectorXd locs(n_out + n_in);
    for (int i = 0; i < n_out; ++i) locs[i] = outside_gap();
    for (int i = 0; i < n_in; ++i)
      locs[n_out + i] = gap_left + cfg.gap_width * rng.uniform();

    // exact simulation of the summed exponential-covariance process
    const Eigen::MatrixXd cov = exp_sum_covariance(locs, locs, cfg);
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("discretization-study simulation covariance");
    Eigen::VectorXd std_normal(locs.size());
    for (Eigen::Index i = 0; i < locs.size(); ++i)
      std_normal[i] = rng.normal();
    Eigen::VectorXd y = llt.matrixL() * std_normal;
    Eigen::VectorXd z(locs.size());
    const double noise_sd = std::sqrt(cfg.noise_var);
    for (Eigen::Index i = 0; i < locs.size(); ++i)
      z[i] = y[i] + noise_sd * rng.normal();

    const Eigen::VectorXd train_locs = locs.head(500);
    const Eigen::VectorXd train_z = z.head(500);
    const Eigen::VectorXd dense_locs = locs.segment(500, 500);
    const Eigen::VectorXd dense_z = z.segment(500, 500);
    const Eigen::VectorXd gap_locs = locs.tail(100);
    const Eigen::VectorXd gap_z = z.tail(100);

    // kriging oracle with the exact covariance
    {
      Eigen::MatrixXd c_train = exp_sum_covariance(train_locs, train_locs, cfg);
      c_train.diagonal().array() += cfg.noise_var;
      const Eigen::LLT<Eigen::MatrixXd> tr_llt(c_train);
      const Eigen::VectorXd alpha = tr_llt.solve(train_z);
      const double c0 = cfg.sigma0_sq + cfg.sigma1_sq + cfg.noise_var;
      auto krige = [&](const Eigen::VectorXd& at) {
        const Eigen::MatrixXd cross = exp_sum_covariance(at, train_locs, cfg);
        PredictiveSummary pred;
        pred.mean = cross * alpha;
        pred.std.resize(at.size());
        const Eigen::MatrixXd sol = tr_llt.solve(cross.transpose());
        for (Eigen::Index i = 0; i < at.size(); ++i)
          pred.std[i] = std::sqrt(
              std::max(c0 - cross.row(i).dot(sol.col(i)), 1e-12));
        return pred;
      };
      const PredictiveSummary dense_pred = krige(dense_locs);
      const PredictiveSummary gap_pred = krige(gap_locs);
      oracle_scores[rep].add(dense_pred, dense_z, gap_pred, gap_z);
    }

    // two-scale GMRF predictions per grid cell
    int cell = 0;
    for (double d0 : cfg.delta0_grid) {
      for (double d1 : cfg.delta1_grid) {
        const Eigen::Index n0 =
            static_cast<Eigen::Index>(std::llround(1.0 / d0));
        const Eigen::Index n1 =
            static_cast<Eigen::Index>(std::llround(1.0 / d1));
        const double phi0 = std::exp(-d0 / cfg.range0);
        const double phi1 = std::exp(-d1 / cfg.range1);
        const SparseSymmetric q0 = assemble_ar1_precision(
            n0, phi0, cfg.sigma0_sq * (1.0 - phi0 * phi0));
        const SparseSymmetric q1 = assemble_ar1_precision(
            n1, phi1, cfg.sigma1_sq * (1.0 - phi1 * phi1));

        const BasisMatrix a0 =
            eval_piecewise_constant_basis(0.0, 1.0, n0, train_locs);
        const BasisMatrix a1 =
            eval_piecewise_constant_basis(0.0, 1.0, n1, train_locs);
        std::vector<Eigen::Triplet<double>> trips;
        auto append = [&](const SparseSymmetric& q, Eigen::Index offset) {
          const auto& l = q.lower();
          for (int c = 0; c < l.outerSize(); ++c)
            for (Eigen::SparseMatrix<double>::InnerIterator it(l, c); it; ++it)
              trips.emplace_back(static_cast<int>(it.row() + offset),
                                 static_cast<int>(it.col() + offset),
                                 it.value());
        };
        append(q0, 0);
        append(q1, n0);
        // A = [A0 A1], Qt = A' A / noise + bdiag(Q0, Q1)
        Eigen::SparseMatrix<double, Eigen::RowMajor> a(train_locs.size(),
                                                       n0 + n1);
        {
          std::vector<Eigen::Triplet<double>> at;
          const auto& m0 = a0.matrix();
          const auto& m1 = a1.matrix();
          for (int r = 0; r < m0.outerSize(); ++r) {
            using Iter =
                Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
            for (Iter it(m0, r); it; ++it)
              at.emplace_back(r, static_cast<int>(it.col()), it.value());
            for (Iter it(m1, r); it; ++it)
              at.emplace_back(r, static_cast<int>(n0 + it.col()), it.value());
          }
          a.setFromTriplets(at.begin(), at.end());
        }
        const Eigen::SparseMatrix<double> a_cm = a;
        const Eigen::SparseMatrix<double> ata =
            Eigen::SparseMatrix<double>(a_cm.transpose() * a_cm) /
            cfg.noise_var;
        for (int c = 0; c < ata.outerSize(); ++c)
          for (Eigen::SparseMatrix<double>::InnerIterator it(ata, c); it; ++it)
            if (it.row() >= it.col())
              trips.emplace_back(static_cast<int>(it.row()),
                                 static_cast<int>(it.col()), it.value());
        const SparseSymmetric qt(n0 + n1, trips);
        const CholeskyFactor factor = cholesky_factorize(qt);
        const Eigen::VectorXd shift =
            a_cm.transpose() * train_z / cfg.noise_var;
        const Eigen::VectorXd mu = factor.solve(shift);

        auto predict = [&](const Eigen::VectorXd& at_locs) {
          const BasisMatrix b0 =
              eval_piecewise_constant_basis(0.0, 1.0, n0, at_locs);
          const BasisMatrix b1 =
              eval_piecewise_constant_basis(0.0, 1.0, n1, at_locs);
          PredictiveSummary pred;
          pred.mean.resize(at_locs.size());
          pred.std.resize(at_locs.size());
          Eigen::MatrixXd rhs =
              Eigen::MatrixXd::Zero(n0 + n1, at_locs.size());
          std::vector<std::pair<int, int>> cells_of(at_locs.size());
          const auto& mb0 = b0.matrix();
          const auto& mb1 = b1.matrix();
          for (Eigen::Index i = 0; i < at_locs.size(); ++i) {
            using Iter =
                Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
            Iter it0(mb0, i), it1(mb1, i);
            const int c0 = static_cast<int>(it0.col());
            const int c1 = static_cast<int>(n0 + it1.col());
            cells_of[i] = {c0, c1};
            rhs(c0, i) = 1.0;
            rhs(c1, i) = 1.0;
          }
          const Eigen::MatrixXd sol = factor.solve(rhs);
          for (Eigen::Index i = 0; i < at_locs.size(); ++i) {
            const auto [c0, c1] = cells_of[i];
            pred.mean[i] = mu[c0] + mu[c1];
            // var = e' Qt^-1 e with e = e_{c0} + e_{c1}
            pred.std[i] =
                std::sqrt(std::max(sol(c0, i) + sol(c1, i), 1e-12));
          }
          return pred;
        };
        PredictiveSummary dense_pred = predict(dense_locs);
        PredictiveSummary gap_pred = predict(gap_locs);
        for (Eigen::Index i = 0; i < dense_pred.std.size(); ++i)
          dense_pred.std[i] = std::sqrt(dense_pred.std[i] * dense_pred.std[i] +
                                        cfg.noise_var);
        for (Eigen::Index i = 0; i < gap_pred.std.size(); ++i)
          gap_pred.std[i] =
              std::sqrt(gap_pred.std[i] * gap_pred.std[i] + cfg.noise_var);
        cell_scores[rep][cell].add(dense_pred, dense_z, gap_pred, gap_z);
        ++cell;
      }
    }
  });

  std::vector<DiscretizationAccumulator> acc(n_cells);
  DiscretizationAccumulator oracle_acc;
  for (int rep = 0; rep < cfg.replicates; ++rep) {
    oracle_acc.rmspe_dense += oracle_scores[rep].rmspe_dense;
    oracle_acc.rmspe_gap += oracle_scores[rep].rmspe_gap;
    oracle_acc.crps_dense += oracle_scores[rep].crps_dense;
    oracle_acc.crps_gap += oracle_scores[rep].crps_gap;
    for (int c = 0; c < n_cells; ++c) {
      acc[c].rmspe_dense += cell_scores[rep][c].rmspe_dense;
      acc[c].rmspe_gap += cell_scores[rep][c].rmspe_gap;
      acc[c].crps_dense += cell_scores[rep][c].crps_dense;
      acc[c].crps_gap += cell_scores[rep][c].crps_gap;
    }
  }

  DiscretizationStudyReport report;
  const double inv = 1.0 / double(cfg.replicates);
  report.oracle.rmspe_dense = oracle_acc.rmspe_dense * inv;
  report.oracle.rmspe_gap = oracle_acc.rmspe_gap * inv;
  report.oracle.crps_dense = oracle_acc.crps_dense * inv;
  report.oracle.crps_gap = oracle_acc.crps_gap * inv;
  int cell = 0;
  for (double d0 : cfg.delta0_grid)
    for (double d1 : cfg.delta1_grid) {
      DiscretizationCell c;
      c.delta0 = d0;
      c.delta1 = d1;
      c.rmspe_dense = acc[cell].rmspe_dense * inv;
      c.rmspe_gap = acc[cell].rmspe_gap * inv;
      c.crps_dense = acc[cell].crps_dense * inv;
      c.crps_gap = acc[cell].crps_gap * inv;
      report.cells.push_back(c);
      ++cell;
    }

  // Fig-8 style monotone degradation across the grid
  report.monotone_dense_in_delta1 = true;
  report.monotone_gap_in_delta0 = true;
  const std::size_t n1g = cfg.delta1_grid.size();
  for (std::size_t i0 = 0; i0 < cfg.delta0_grid.size(); ++i0)
    for (std::size_t i1 = 0; i1 + 1 < n1g; ++i1) {
      const auto& lo = report.cells[i0 * n1g + i1];
      const auto& hi = report.cells[i0 * n1g + i1 + 1];
      if (hi.rmspe_dense < lo.rmspe_dense)
        report.monotone_dense_in_delta1 = false;
    }
  for (std::size_t i1 = 0; i1 < n1g; ++i1)
    for (std::size_t i0 = 0; i0 + 1 < cfg.delta0_grid.size(); ++i0) {
      const auto& lo = report.cells[i0 * n1g + i1];
      const auto& hi = report.cells[(i0 + 1) * n1g + i1];
      if (hi.rmspe_gap < lo.rmspe_gap) report.monotone_gap_in_delta0 = false;
    }
  return report;
}

void write_discretization_study_csv(const DiscretizationStudyReport& report,
                          const std::string& directory) {
  ensure_directory(directory);
  std::ofstream out(directory + "/scores_grid.csv");
  out << "delta0,delta1,rmspe_dense,rmspe_gap,crps_dense,crps_gap\n";
  out.precision(10);
  for (const auto& c : report.cells)
    out << c.delta0 << "," << c.delta1 << "," << c.rmspe_dense << ","
        << c.rmspe_gap << "," << c.crps_dense << "," << c.crps_gap << "\n";
  std::ofstream oracle(directory + "/scores_oracle.csv");
  oracle << "rmspe_dense,rmspe_gap,crps_dense,crps_gap\n";
  oracle.precision(10);
  oracle << report.oracle.rmspe_dense << "," << report.oracle.rmspe_gap << ","
         << report.oracle.crps_dense << "," << report.oracle.crps_gap << "\n";
}

Fit2dProblem build_fit_2d_problem(const Fit2dConfig& cfg) {
  BoundingBox unit_square{0.0, 1.0, 0.0, 1.0};
  auto coarse = std::make_shared<Mesh>(
      build_grid_mesh(2, unit_square, cfg.coarse_spacing));
  auto fine =
      std::make_shared<Mesh>(build_grid_mesh(2, unit_square, cfg.fine_spacing));
  auto params =
      std::make_shared<Mesh>(build_grid_mesh(2, unit_square, cfg.param_spacing));
  auto eps_mesh =
      std::make_shared<Mesh>(build_grid_mesh(2, unit_square, cfg.eps_spacing));

  Rng rng(derive_seed(cfg.seed, 0, StepTag::experiment, 7));

  // truth: coarse scale stationary, fine scale with drifting log fields
  const FemOperators ops0 = assemble_fem_operators(*coarse);
  const FemOperators ops1 = assemble_fem_operators(*fine);
  const NaturalParams np0 = natural_nu1(std::log(cfg.true_sigma0),
                                        std::log(cfg.true_rho0));
  const Eigen::Index r0 = coarse->vertex_count();
  const SparseSymmetric q0 = assemble_spde_precision(
      ops0, Eigen::VectorXd::Constant(r0, std::exp(np0.log_kappa)),
      Eigen::VectorXd::Constant(r0, std::exp(np0.log_tau)));
  const Eigen::Index r1 = fine->vertex_count();
  // with fixed parameters the truth is the constant centre field, so the
  // kriging comparison runs at exactly the generating values
  const double slope = cfg.fix_parameters ? 0.0 : cfg.nonstat_slope;
  Eigen::VectorXd kappa1(r1), tau1(r1);
  for (Eigen::Index v = 0; v < r1; ++v) {
    const double x = fine->vertices()(v, 0);
    const double y = fine->vertices()(v, 1);
    const double ls = std::log(cfg.true_sigma1_centre) + slope * (x - 0.5);
    const double lr = std::log(cfg.true_rho1_centre) + slope * (y - 0.5);
    const NaturalParams np = natural_nu1(ls, lr);
    kappa1[v] = std::exp(np.log_kappa);
    tau1[v] = std::exp(np.log_tau);
  }
  const SparseSymmetric q1 = assemble_spde_precision(ops1, kappa1, tau1);

  const Eigen::VectorXd eta0 = cholesky_factorize(q0).perturb(
      Eigen::VectorXd::Zero(r0), rng);
  const Eigen::VectorXd eta1 = cholesky_factorize(q1).perturb(
      Eigen::VectorXd::Zero(r1), rng);

  auto sample_location = [&](bool avoid_box) {
    for (;;) {
      const double x = rng.uniform();
      const double y = rng.uniform();
      if (avoid_box && cfg.held_out.contains(x, y)) continue;
      return Eigen::Vector2d(x, y);
    }
  };
  Eigen::MatrixXd train_locs(cfg.n_train, 2);
  for (long i = 0; i < cfg.n_train; ++i)
    train_locs.row(i) = sample_location(true).transpose();
  Eigen::MatrixXd val_locs(cfg.n_validation, 2);
  for (long i = 0; i < cfg.n_validation; ++i)
    val_locs.row(i) = sample_location(false).transpose();

  auto observe = [&](const Eigen::MatrixXd& locs) {
    const BasisMatrix a0 = eval_basis_matrix(*coarse, locs);
    const BasisMatrix a1 = eval_basis_matrix(*fine, locs);
    Eigen::VectorXd z = a0.apply(eta0) + a1.apply(eta1);
    for (Eigen::Index i = 0; i < z.size(); ++i)
      z[i] += cfg.true_eps_sd * rng.normal();
    return z;
  };
  const Eigen::VectorXd train_z = observe(train_locs);
  const Eigen::VectorXd val_z = observe(val_locs);

  Fit2dProblem problem;
  ModelSpec& spec = problem.spec;
  spec.K = 1;
  spec.scales.resize(2);
  spec.scales[0].process_mesh = coarse;
  spec.scales[1].process_mesh = fine;
  spec.scales[1].param_mesh = params;
  spec.eps_mesh = eps_mesh;
  if (cfg.fix_parameters) {
    // point the priors at the truth; the fix flags freeze the values there
    spec.scales[0].sigma_prior = {std::log(cfg.true_sigma0), 1e-12};
    spec.scales[0].rho_prior = {std::log(cfg.true_rho0), 1e-12};
    spec.scales[1].sigma_prior = {std::log(cfg.true_sigma1_centre), 1e-12};
    spec.scales[1].rho_prior = {std::log(cfg.true_rho1_centre), 1e-12};
    spec.eps_prior = {std::log(cfg.true_eps_sd), 1e-12};
    spec.options.fix_theta0 = true;
    spec.options.fix_thetak = true;
    spec.options.fix_theta_eps = true;
  } else {
    spec.scales[0].sigma_prior = prior_from_quantiles(0.2, 4.0);
    spec.scales[0].rho_prior = prior_from_quantiles(0.15, 2.0);
    spec.scales[1].sigma_prior = prior_from_quantiles(0.05, 1.5);
    spec.scales[1].rho_prior = prior_from_quantiles(0.03, 0.15);
    spec.eps_prior = prior_from_quantiles(0.02, 0.5);
  }
  spec.data.locations = train_locs;
  spec.data.values = train_z;
  spec.options.tile_extent = cfg.tile_extent;
  spec.options.min_tile_data = cfg.min_tile_data;
  spec.options.min_tile_basis = cfg.min_tile_basis;
  spec.options.footprint_rings = cfg.footprint_rings;
  spec.options.guideline_scale = 0.01;  // desk scale

  problem.validation_locations = val_locs;
  problem.validation_values = val_z;
  return problem;
}

Fit2dReport fit_2d_demo(const Fit2dConfig& cfg) {
  Fit2dProblem problem = build_fit_2d_problem(cfg);
  const Workspace ws = build_workspace(problem.spec);
  Fit2dReport report;
  report.chain = run_chain(problem.spec, ws, cfg.iterations, cfg.burn_in,
                           cfg.thin, cfg.seed, cfg.workers);
  report.predictions = predict_at(problem.spec, report.chain.samples,
                                  problem.validation_locations);
  report.validation_truth = problem.validation_values;
  report.split = split_validation(problem.spec.data.locations,
                                  problem.validation_locations, cfg.held_out,
                                  cfg.vicinity_halfwidth);

  auto subset = [&](const std::vector<int>& idx) {
    PredictiveSummary pred;
    Eigen::VectorXd truth(idx.size());
    pred.mean.resize(idx.size());
    pred.std.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      pred.mean[i] = report.predictions.mean[idx[i]];
      pred.std[i] = report.predictions.std[idx[i]];
      truth[i] = problem.validation_values[idx[i]];
    }
    return std::make_pair(pred, truth);
  };
  if (!report.split.near_data.empty()) {
    auto [pred, truth] = subset(report.split.near_data);
    report.scores.push_back(score_all("Zv1_near", "msgmrf", pred, truth));
  }
  if (!report.split.far_data.empty()) {
    auto [pred, truth] = subset(report.split.far_data);
    report.scores.push_back(score_all("Zv2_far", "msgmrf", pred, truth));
  }
  if (!report.split.held_out_box.empty()) {
    auto [pred, truth] = subset(report.split.held_out_box);
    report.scores.push_back(score_all("Zv3_box", "msgmrf", pred, truth));
  }
  report.scores.push_back(score_all("overall", "msgmrf", report.predictions,
                                    problem.validation_values));
  report.cov90_overall = report.scores.back().cov90;
  report.rmspe_overall = report.scores.back().rmspe;

  if (cfg.fix_parameters) {
    // dense conjugate kriging oracle on a validation subsample
    const Eigen::Index n_sub =
        std::min<Eigen::Index>(200, problem.validation_locations.rows());
    Eigen::MatrixXd sub_locs(n_sub, 2);
    Eigen::VectorXd sub_truth(n_sub);
    std::vector<int> sub_idx(n_sub);
    for (Eigen::Index i = 0; i < n_sub; ++i) {
      sub_locs.row(i) = problem.validation_locations.row(i);
      sub_truth[i] = problem.validation_values[i];
      sub_idx[i] = static_cast<int>(i);
    }
    const auto& spec = problem.spec;
    const Eigen::Index r0 = spec.scales[0].process_mesh->vertex_count();
    const Eigen::Index r1 = spec.scales[1].process_mesh->vertex_count();
    // truth precision blocks at the fixed parameter values
    const NaturalParams np0 = natural_nu1(spec.scales[0].sigma_prior.omega,
                                          spec.scales[0].rho_prior.omega);
    const SparseSymmetric q0 = assemble_spde_precision(
        ws.scales[0].ops,
        Eigen::VectorXd::Constant(r0, std::exp(np0.log_kappa)),
        Eigen::VectorXd::Constant(r0, std::exp(np0.log_tau)));
    Eigen::VectorXd log_sigma =
        ws.scales[1].param_at_vertices.apply(Eigen::VectorXd::Constant(
            spec.scales[1].param_mesh->vertex_count(),
            spec.scales[1].sigma_prior.omega));
    Eigen::VectorXd log_rho =
        ws.scales[1].param_at_vertices.apply(Eigen::VectorXd::Constant(
            spec.scales[1].param_mesh->vertex_count(),
            spec.scales[1].rho_prior.omega));
    Eigen::VectorXd kappa1(r1), tau1(r1);
    for (Eigen::Index v = 0; v < r1; ++v) {
      const NaturalParams np = natural_nu1(log_sigma[v], log_rho[v]);
      kappa1[v] = std::exp(np.log_kappa);
      tau1[v] = std::exp(np.log_tau);
    }
    const SparseSymmetric q1 =
        assemble_spde_precision(ws.scales[1].ops, kappa1, tau1);

    const double noise_var =
        std::exp(2.0 * spec.eps_prior.omega);
    Eigen::MatrixXd qt = Eigen::MatrixXd::Zero(r0 + r1, r0 + r1);
    qt.topLeftCorner(r0, r0) = q0.dense();
    qt.bottomRightCorner(r1, r1) = q1.dense();
    Eigen::MatrixXd a(spec.data.size(), r0 + r1);
    a.leftCols(r0) = Eigen::MatrixXd(ws.scales[0].basis.matrix());
    a.rightCols(r1) = Eigen::MatrixXd(ws.scales[1].basis.matrix());
    qt.noalias() += a.transpose() * a / noise_var;
    const Eigen::LLT<Eigen::MatrixXd> llt(qt);
    const Eigen::VectorXd mu =
        llt.solve(a.transpose() * spec.data.values / noise_var);

    const BasisMatrix b0 =
        eval_basis_matrix(*spec.scales[0].process_mesh, sub_locs);
    const BasisMatrix b1 =
        eval_basis_matrix(*spec.scales[1].process_mesh, sub_locs);
    Eigen::VectorXd kriging_mean =
        b0.apply(mu.head(r0)) + b1.apply(mu.tail(r1));

    Eigen::VectorXd sampler_mean(n_sub);
    for (Eigen::Index i = 0; i < n_sub; ++i)
      sampler_mean[i] = report.predictions.mean[i];
    report.rmspe_sampler_subsample = std::sqrt(
        (sampler_mean - sub_truth).squaredNorm() / double(n_sub));
    report.rmspe_kriging_subsample = std::sqrt(
        (kriging_mean - sub_truth).squaredNorm() / double(n_sub));
  }
  return report;
}

void write_fit_2d_csv(const Fit2dReport& report, const ModelSpec& spec,
                      const std::string& directory) {
  ensure_directory(directory);
  write_score_table_csv(report.scores, directory + "/scores.csv");
  write_predictions_csv(report.predictions, directory + "/predictions.csv");
  write_chain_csv(report.chain, spec, directory + "/samples");
}

}  // namespace msgmrf
