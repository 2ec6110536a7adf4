// msgmrf command-line driver: simulation experiments, model fitting,
// prediction, scoring, and colouring exports.

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "msgmrf/diagnostics.hpp"
#include "msgmrf/errors.hpp"
#include "msgmrf/experiments.hpp"
#include "msgmrf/graph.hpp"
#include "msgmrf/io.hpp"
#include "msgmrf/sampler.hpp"

namespace {

using namespace msgmrf;

std::shared_ptr<const Mesh> grid_from_config(const Config& cfg,
                                             const std::string& prefix,
                                             int dimension) {
  BoundingBox box;
  box.xlo = cfg.get_double_or(prefix + "_xlo", 0.0);
  box.xhi = cfg.get_double_or(prefix + "_xhi", 1.0);
  if (dimension == 2) {
    box.ylo = cfg.get_double_or(prefix + "_ylo", 0.0);
    box.yhi = cfg.get_double_or(prefix + "_yhi", 1.0);
  }
  const double spacing = cfg.get_double(prefix + "_spacing");
  return std::make_shared<Mesh>(build_grid_mesh(dimension, box, spacing));
}

GaussianPrior prior_from_config(const Config& cfg, const std::string& prefix) {
  if (cfg.has(prefix + "_omega")) {
    GaussianPrior p;
    p.omega = cfg.get_double(prefix + "_omega");
    p.lambda = cfg.get_double(prefix + "_lambda");
    return p;
  }
  return prior_from_quantiles(cfg.get_double(prefix + "_q025"),
                              cfg.get_double(prefix + "_q975"));
}

int run_simulate_b(const Config& cfg, std::uint64_t seed,
                   const std::string& out_dir) {
  TilingStudyConfig bc;
  bc.n = cfg.get_int_or("n", 99);
  bc.phi = cfg.get_double_or("phi", 0.9);
  bc.sigma_v_sq = cfg.get_double_or("sigma_v_sq", 0.2);
  bc.iterations = cfg.get_int_or("iterations", 10000);
  bc.keep_last = cfg.get_int_or("keep_last", 5000);
  bc.thin_factor = cfg.get_int_or("thin_factor", 2);
  bc.tracked_index = cfg.get_int_or("tracked_index", 49) - 1;
  bc.seed = seed;
  const TilingStudyReport report = run_tiling_study(bc);
  write_tiling_study_csv(report, out_dir);
  std::printf("sampler1 acf(1) = %.4f\n", report.acf_fixed[1]);
  double max_acf2 = 0.0;
  for (int t = 1; t <= 10; ++t)
    max_acf2 = std::max(max_acf2, std::abs(report.acf_alternating[t]));
  std::printf("sampler2 max |acf(1..10)| = %.4f\n", max_acf2);
  std::printf("variances: sampler1 %.4f sampler2 %.4f exact %.4f\n",
              report.var_fixed, report.var_alternating,
              report.exact_variance);
  return 0;
}

int run_simulate_c(const Config& cfg, std::uint64_t seed, int workers,
                   const std::string& out_dir) {
  DiscretizationStudyConfig cc;
  cc.replicates = static_cast<int>(cfg.get_int_or("replicates", 100));
  cc.range0 = cfg.get_double_or("range0", 0.4);
  cc.range1 = cfg.get_double_or("range1", 0.04);
  cc.sigma0_sq = cfg.get_double_or("sigma0_sq", 1.0);
  cc.sigma1_sq = cfg.get_double_or("sigma1_sq", 0.05);
  cc.noise_var = cfg.get_double_or("noise_var", 2e-4);
  cc.delta0_grid = cfg.get_list_or("delta0_grid", cc.delta0_grid);
  cc.delta1_grid = cfg.get_list_or("delta1_grid", cc.delta1_grid);
  cc.seed = seed;
  cc.workers = workers;
  const DiscretizationStudyReport report = run_discretization_study(cc);
  write_discretization_study_csv(report, out_dir);
  std::printf("oracle: rmspe %.4f / %.4f, crps %.4f / %.4f (dense/gap)\n",
              report.oracle.rmspe_dense, report.oracle.rmspe_gap,
              report.oracle.crps_dense, report.oracle.crps_gap);
  std::printf("monotone trends: dense-in-delta1 %s, gap-in-delta0 %s\n",
              report.monotone_dense_in_delta1 ? "yes" : "no",
              report.monotone_gap_in_delta0 ? "yes" : "no");
  return 0;
}

int run_fit(const Config& cfg, std::uint64_t seed, int workers,
            const std::string& out_dir) {
  if (cfg.get_bool_or("demo_2d", false)) {
    Fit2dConfig fc;
    fc.iterations = cfg.get_int_or("iterations", 600);
    fc.burn_in = cfg.get_int_or("burn_in", fc.iterations / 2);
    fc.thin = cfg.get_int_or("thin", 3);
    fc.n_train = cfg.get_int_or("n_train", 2500);
    fc.n_validation = cfg.get_int_or("n_validation", 1500);
    fc.coarse_spacing = cfg.get_double_or("coarse_spacing", fc.coarse_spacing);
    fc.fine_spacing = cfg.get_double_or("fine_spacing", fc.fine_spacing);
    fc.param_spacing = cfg.get_double_or("param_spacing", fc.param_spacing);
    fc.fix_parameters = cfg.get_bool_or("fix_parameters", false);
    fc.seed = seed;
    fc.workers = workers;
    const Fit2dReport report = fit_2d_demo(fc);
    const Fit2dProblem problem = build_fit_2d_problem(fc);
    write_fit_2d_csv(report, problem.spec, out_dir);
    for (const auto& row : report.scores)
      std::printf("%-10s rmspe %.4f crps %.4f is90 %.4f cov90 %.4f\n",
                  row.dataset.c_str(), row.rmspe, row.crps, row.is90,
                  row.cov90);
    return 0;
  }

  PointData data = read_points_csv(cfg.get("data_csv"));
  if (data.dropped_rows > 0)
    std::fprintf(stderr, "dropped %zu non-finite rows\n", data.dropped_rows);
  if (cfg.get_bool_or("detrend", false)) {
    const DetrendResult dt = detrend(data);
    data = dt.residuals;
    std::printf("detrend coefficients: %.6g %.6g %.6g\n", dt.coefficients[0],
                dt.coefficients[1], dt.coefficients[2]);
  }
  const int dim = data.dimension();
  ModelSpec spec;
  spec.K = static_cast<int>(cfg.get_int_or("scales", 1));
  spec.scales.resize(spec.K + 1);
  spec.scales[0].process_mesh = grid_from_config(cfg, "mesh0", dim);
  spec.scales[0].sigma_prior = prior_from_config(cfg, "sigma0");
  spec.scales[0].rho_prior = prior_from_config(cfg, "rho0");
  for (int k = 1; k <= spec.K; ++k) {
    const std::string p = "mesh" + std::to_string(k);
    spec.scales[k].process_mesh = grid_from_config(cfg, p, dim);
    spec.scales[k].param_mesh =
        grid_from_config(cfg, "param_mesh" + std::to_string(k), dim);
    spec.scales[k].sigma_prior =
        prior_from_config(cfg, "sigma" + std::to_string(k));
    spec.scales[k].rho_prior =
        prior_from_config(cfg, "rho" + std::to_string(k));
  }
  spec.eps_mesh = grid_from_config(cfg, "eps_mesh", dim);
  spec.eps_prior = prior_from_config(cfg, "eps");

  // keep only data inside every process mesh
  {
    std::vector<char> keep(data.size(), 1);
    for (int k = 0; k <= spec.K; ++k) {
      const auto mask = inside_mask(*spec.scales[k].process_mesh,
                                    data.locations);
      for (Eigen::Index i = 0; i < data.size(); ++i)
        keep[i] = keep[i] && mask[i];
    }
    Eigen::Index kept = 0;
    for (Eigen::Index i = 0; i < data.size(); ++i)
      if (keep[i]) ++kept;
    if (kept < data.size()) {
      PointData filtered;
      filtered.locations.resize(kept, dim);
      filtered.values.resize(kept);
      Eigen::Index w = 0;
      for (Eigen::Index i = 0; i < data.size(); ++i)
        if (keep[i]) {
          filtered.locations.row(w) = data.locations.row(i);
          filtered.values[w] = data.values[i];
          ++w;
        }
      std::fprintf(stderr, "dropped %ld points outside the meshes\n",
                   long(data.size() - kept));
      data = std::move(filtered);
    }
  }
  spec.data = std::move(data);
  spec.options.tile_extent = cfg.get_double_or("tile_extent", 0.25);
  spec.options.min_tile_data =
      static_cast<int>(cfg.get_int_or("min_tile_data", 100));
  spec.options.min_tile_basis =
      static_cast<int>(cfg.get_int_or("min_tile_basis", 200));
  spec.options.footprint_rings =
      static_cast<int>(cfg.get_int_or("footprint_rings", 0));
  spec.options.guideline_scale = cfg.get_double_or("guideline_scale", 1.0);

  for (const auto& warning : validate_spec(spec))
    std::fprintf(stderr, "warning: %s\n", warning.c_str());

  const Workspace ws = build_workspace(spec);
  const long iterations = cfg.get_int_or("iterations", 10000);
  const long burn_in = cfg.get_int_or("burn_in", iterations / 2);
  const long thin_every = cfg.get_int_or("thin", 50);
  const ChainOutput chain =
      run_chain(spec, ws, iterations, burn_in, thin_every, seed, workers);
  write_chain_csv(chain, spec, out_dir + "/samples");
  if (chain.failed()) {
    std::fprintf(stderr, "fatal: %s\npartial output written to %s\n",
                 chain.error.c_str(), out_dir.c_str());
    write_chain_csv(ChainOutput{{chain.last_state}, {}, {}, {}, "", {}}, spec,
                    out_dir + "/samples/last-state");
    return 1;
  }

  // ESS report over the theta traces
  std::vector<EssReportRow> ess;
  auto add_trace = [&](const std::string& label, auto getter) {
    ChainTrace t;
    t.label = label;
    t.values.resize(chain.samples.size());
    for (std::size_t i = 0; i < chain.samples.size(); ++i)
      t.values[i] = getter(chain.samples[i]);
    if (t.values.size() >= 4) {
      EssReportRow row;
      row.label = label;
      row.n = t.values.size();
      try {
        row.n_eff = effective_sample_size(t);
      } catch (const DegenerateTrace&) {
        row.n_eff = 0.0;
      }
      ess.push_back(row);
    }
  };
  add_trace("log_sigma0", [](const ModelState& s) { return s.theta0[0]; });
  add_trace("log_rho0", [](const ModelState& s) { return s.theta0[1]; });
  for (Eigen::Index i = 0; i < chain.samples.front().theta_eps.size(); ++i)
    add_trace("theta_eps[" + std::to_string(i) + "]",
              [i](const ModelState& s) { return s.theta_eps[i]; });
  ensure_directory(out_dir + "/diagnostics");
  write_ess_report_csv(ess, out_dir + "/diagnostics/ess.csv");
  return 0;
}

int run_predict(const Config& cfg, const std::string& out_dir) {
  // rebuild the meshes from the fit config keys, reload the stored thinned
  // samples, and summarize predictions at new locations
  const PointData locations = read_points_csv(cfg.get("locations_csv"));
  const int dim = locations.dimension();
  ModelSpec spec;
  spec.K = static_cast<int>(cfg.get_int_or("scales", 1));
  spec.scales.resize(spec.K + 1);
  spec.scales[0].process_mesh = grid_from_config(cfg, "mesh0", dim);
  for (int k = 1; k <= spec.K; ++k) {
    spec.scales[k].process_mesh =
        grid_from_config(cfg, "mesh" + std::to_string(k), dim);
    spec.scales[k].param_mesh =
        grid_from_config(cfg, "param_mesh" + std::to_string(k), dim);
  }
  spec.eps_mesh = grid_from_config(cfg, "eps_mesh", dim);
  const std::vector<ModelState> states =
      read_chain_csv(spec, cfg.get("samples_dir"));
  if (states.empty()) {
    std::fprintf(stderr, "no stored samples found\n");
    return 1;
  }
  const PredictiveSummary pred =
      predict_at(spec, states, locations.locations);
  ensure_directory(out_dir);
  write_predictions_csv(pred, out_dir + "/predictions.csv");
  std::printf("predicted %ld locations from %zu samples\n",
              long(locations.size()), states.size());
  return 0;
}

int run_score(const Config& cfg, const std::string& out_dir) {
  const PointData truth = read_points_csv(cfg.get("truth_csv"));
  const PredictiveSummary pred =
      read_predictions_csv(cfg.get("predictions_csv"), truth.size());
  const std::string model = cfg.get_or("model", "external");
  std::vector<ScoreRow> rows;
  if (cfg.has("box_xlo")) {
    Box box;
    box.xlo = cfg.get_double("box_xlo");
    box.xhi = cfg.get_double("box_xhi");
    box.ylo = cfg.get_double_or("box_ylo", 0.0);
    box.yhi = cfg.get_double_or("box_yhi", 0.0);
    const double vicinity = cfg.get_double_or("vicinity", 0.03);
    const PointData train = read_points_csv(cfg.get("train_csv"));
    const ValidationSplit split =
        split_validation(train.locations, truth.locations, box, vicinity);
    auto subset = [&](const std::vector<int>& idx, const std::string& name) {
      if (idx.empty()) return;
      PredictiveSummary p;
      Eigen::VectorXd t(idx.size());
      p.mean.resize(idx.size());
      p.std.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        p.mean[i] = pred.mean[idx[i]];
        p.std[i] = pred.std[idx[i]];
        t[i] = truth.values[idx[i]];
      }
      rows.push_back(score_all(name, model, p, t));
    };
    subset(split.near_data, "Zv1_near");
    subset(split.far_data, "Zv2_far");
    subset(split.held_out_box, "Zv3_box");
  }
  rows.push_back(score_all("overall", model, pred, truth.values));
  ensure_directory(out_dir);
  write_score_table_csv(rows, out_dir + "/scores.csv");
  for (const auto& row : rows)
    std::printf("%-10s rmspe %.4f crps %.4f is90 %.4f cov90 %.4f\n",
                row.dataset.c_str(), row.rmspe, row.crps, row.is90, row.cov90);
  return 0;
}

int run_colour(const Config& cfg, const std::string& out_dir) {
  const int dim = static_cast<int>(cfg.get_int_or("dimension", 2));
  const auto mesh = grid_from_config(cfg, "mesh", dim);
  const double tile_extent = cfg.get_double_or("tile_extent", 0.25);
  const auto tilings =
      build_tilings(*mesh, tile_extent,
                    static_cast<int>(cfg.get_int_or("min_tile_data", 0)),
                    static_cast<int>(cfg.get_int_or("min_tile_basis", 1)), {});
  const FemOperators ops = assemble_fem_operators(*mesh);
  const DependencyGraph graph = pattern_graph(ops.gcg);
  ensure_directory(out_dir);
  for (int p = 0; p < 3; ++p) {
    const Colouring tiles =
        colour_escalating(tile_supergraph(tilings[p], graph), 4);
    // per-vertex colour of its tile
    Colouring by_vertex;
    by_vertex.num_colours = tiles.num_colours;
    by_vertex.colour_of.resize(mesh->vertex_count());
    for (Eigen::Index v = 0; v < mesh->vertex_count(); ++v)
      by_vertex.colour_of[v] = tiles.colour_of[tilings[p].tile_of[v]];
    write_colouring_csv(by_vertex, out_dir + "/colours_tiling" +
                                       std::to_string(p + 1) + ".csv");
    std::printf("tiling %d: %zu tiles, %d colours\n", p + 1,
                tilings[p].tiles.size(), tiles.num_colours);
  }
  write_mesh_text(*mesh, out_dir + "/mesh.txt");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale GMRF spatial modelling"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int workers = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key = value config file");
    sub->add_option("--seed", seed, "chain seed");
    sub->add_option("--workers", workers, "worker thread count");
    sub->add_option("--out", out_dir, "output directory");
  };
  auto* sim_b = app.add_subcommand("simulate-b", "fixed vs alternating tilings");
  auto* sim_c = app.add_subcommand("simulate-c", "two-scale discretization study");
  auto* fit = app.add_subcommand("fit", "fit the multi-scale model");
  auto* predict = app.add_subcommand("predict", "predict from stored samples");
  auto* score = app.add_subcommand("score", "score stored predictions");
  auto* colour = app.add_subcommand("colour", "export tilings and colourings");
  for (auto* sub : {sim_b, sim_c, fit, predict, score, colour}) add_common(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    msgmrf::Config cfg = config_path.empty()
                             ? msgmrf::Config{}
                             : msgmrf::Config::from_file(config_path);
    // explicit command-line values win over config values; both are echoed
    CLI::App* active = app.get_subcommands().front();
    if (active->count("--seed") > 0) cfg.set_int("seed", static_cast<long>(seed));
    if (active->count("--workers") > 0) cfg.set_int("workers", workers);
    seed = static_cast<std::uint64_t>(
        cfg.get_int_or("seed", static_cast<long>(seed)));
    workers = static_cast<int>(cfg.get_int_or("workers", workers));
    msgmrf::ensure_directory(out_dir);
    int rc = 2;
    if (app.got_subcommand(sim_b)) rc = run_simulate_b(cfg, seed, out_dir);
    if (app.got_subcommand(sim_c))
      rc = run_simulate_c(cfg, seed, workers, out_dir);
    if (app.got_subcommand(fit)) rc = run_fit(cfg, seed, workers, out_dir);
    if (app.got_subcommand(predict)) rc = run_predict(cfg, out_dir);
    if (app.got_subcommand(score)) rc = run_score(cfg, out_dir);
    if (app.got_subcommand(colour)) rc = run_colour(cfg, out_dir);
    cfg.write_echo(out_dir + "/config-echo.txt");
    return rc;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
