#include "msgmrf/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "msgmrf/errors.hpp"

namespace msgmrf {

std::vector<std::string> validate_spec(const ModelSpec& spec) {
  std::vector<std::string> warnings;
  if (spec.K < 1) warnings.push_back("K < 1: no fine scales defined");
  if (spec.scales.size() != static_cast<std::size_t>(spec.K) + 1)
    throw ConfigError("need K+1 scale specs");
  const double scale = spec.options.guideline_scale;
  const double lo = 1e4 * scale, hi = 1e5 * scale;
  const double r0 = double(spec.scales[0].process_mesh->vertex_count());
  if (r0 < lo || r0 > hi)
    warnings.push_back("r_eta0 = " + std::to_string(long(r0)) +
                       " outside guideline range [" + std::to_string(long(lo)) +
                       ", " + std::to_string(long(hi)) + "]");
  for (int k = 1; k <= spec.K; ++k) {
    const double rk = double(spec.scales[k].process_mesh->vertex_count());
    const double rprev = double(spec.scales[k - 1].process_mesh->vertex_count());
    if (rk <= rprev)
      warnings.push_back("process meshes must refine with k (scale " +
                         std::to_string(k) + ")");
    const double ratio = rk / rprev;
    if (ratio < 10.0 || ratio > 1000.0)
      warnings.push_back("|eta_" + std::to_string(k) + "| / |eta_" +
                         std::to_string(k - 1) + "| = " +
                         std::to_string(ratio) +
                         " far from the x100 guideline");
    if (!spec.scales[k].param_mesh)
      throw ConfigError("scale " + std::to_string(k) + " needs a param mesh");
  }
  if (!spec.eps_mesh) throw ConfigError("eps mesh required");
  if (spec.data.size() < 1) warnings.push_back("no data bound to the model");
  return warnings;
}

InMemoryChunks::InMemoryChunks(
    Eigen::VectorXd z,
    std::vector<Eigen::SparseMatrix<double, Eigen::RowMajor>> a)
    : z_(std::move(z)), a_(std::move(a)) {}

Eigen::VectorXd InMemoryChunks::z_chunk(const std::vector<int>& rows) const {
  Eigen::VectorXd out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = z_[rows[i]];
  return out;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> InMemoryChunks::basis_rows(
    int scale, const std::vector<int>& rows) const {
  const auto& m = a_.at(scale);
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    using Iter = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
    for (Iter it(m, rows[i]); it; ++it)
      trips.emplace_back(static_cast<int>(i), static_cast<int>(it.col()),
                         it.value());
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> out(
      static_cast<Eigen::Index>(rows.size()), m.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

void FileBackedChunks::save(const Eigen::VectorXd& z,
                            const std::vector<const BasisMatrix*>& a,
                            const std::string& directory) {
  ensure_directory(directory);
  {
    std::ofstream out(directory + "/z.bin", std::ios::binary);
    const std::uint64_t m = z.size();
    out.write(reinterpret_cast<const char*>(&m), sizeof(m));
    out.write(reinterpret_cast<const char*>(z.data()),
              sizeof(double) * z.size());
  }
  for (std::size_t k = 0; k < a.size(); ++k) {
    std::ofstream out(directory + "/a" + std::to_string(k) + ".bin",
                      std::ios::binary);
    const std::uint64_t rows = a[k]->rows();
    const std::uint64_t cols = a[k]->cols();
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    std::vector<std::uint64_t> offsets(rows + 1, 0);
    const auto& m = a[k]->matrix();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      using Iter = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
      std::uint64_t count = 0;
      for (Iter it(m, r); it; ++it) ++count;
      offsets[r + 1] = offsets[r] + count;
    }
    out.write(reinterpret_cast<const char*>(offsets.data()),
              sizeof(std::uint64_t) * offsets.size());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      using Iter = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
      for (Iter it(m, r); it; ++it) {
        const std::uint64_t col = it.col();
        const double val = it.value();
        out.write(reinterpret_cast<const char*>(&col), sizeof(col));
        out.write(reinterpret_cast<const char*>(&val), sizeof(val));
      }
    }
  }
}

FileBackedChunks::FileBackedChunks(const std::string& directory) {
  {
    std::ifstream in(directory + "/z.bin", std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + directory + "/z.bin");
    std::uint64_t m = 0;
    in.read(reinterpret_cast<char*>(&m), sizeof(m));
    z_.resize(static_cast<Eigen::Index>(m));
    in.read(reinterpret_cast<char*>(z_.data()), sizeof(double) * m);
  }
  for (std::size_t k = 0;; ++k) {
    const std::string path = directory + "/a" + std::to_string(k) + ".bin";
    std::ifstream in(path, std::ios::binary);
    if (!in) break;
    ScaleFile sf;
    sf.path = path;
    std::uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    sf.cols = static_cast<Eigen::Index>(cols);
    sf.offsets.resize(rows + 1);
    in.read(reinterpret_cast<char*>(sf.offsets.data()),
            sizeof(std::uint64_t) * sf.offsets.size());
    scales_.push_back(std::move(sf));
  }
  if (scales_.empty())
    throw std::runtime_error("no basis chunk files in " + directory);
}

Eigen::VectorXd FileBackedChunks::z_chunk(const std::vector<int>& rows) const {
  Eigen::VectorXd out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = z_[rows[i]];
  return out;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> FileBackedChunks::basis_rows(
    int scale, const std::vector<int>& rows) const {
  const ScaleFile& sf = scales_.at(scale);
  std::ifstream in(sf.path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot reopen " + sf.path);
  const std::uint64_t header =
      2 * sizeof(std::uint64_t) + sizeof(std::uint64_t) * sf.offsets.size();
  const std::uint64_t entry = sizeof(std::uint64_t) + sizeof(double);
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::uint64_t begin = sf.offsets[rows[i]];
    const std::uint64_t end = sf.offsets[rows[i] + 1];
    in.seekg(static_cast<std::streamoff>(header + begin * entry));
    for (std::uint64_t e = begin; e < end; ++e) {
      std::uint64_t col = 0;
      double val = 0.0;
      in.read(reinterpret_cast<char*>(&col), sizeof(col));
      in.read(reinterpret_cast<char*>(&val), sizeof(val));
      trips.emplace_back(static_cast<int>(i), static_cast<int>(col), val);
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> out(
      static_cast<Eigen::Index>(rows.size()), sf.cols);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

namespace {

std::vector<int> ring_expand(const DependencyGraph& graph,
                             const std::vector<int>& seed, int rings) {
  std::vector<char> member(graph.node_count(), 0);
  for (int v : seed) member[v] = 1;
  std::vector<int> current = seed;
  for (int r = 0; r < rings; ++r) {
    std::vector<int> added;
    for (int v : current)
      for (int w : graph.neighbours(v))
        if (!member[w]) {
          member[w] = 1;
          added.push_back(w);
        }
    current = std::move(added);
    if (current.empty()) break;
  }
  std::vector<int> out;
  for (int v = 0; v < graph.node_count(); ++v)
    if (member[v]) out.push_back(v);
  return out;
}

std::vector<int> blanket_of(const DependencyGraph& graph,
                            const std::vector<int>& set) {
  std::vector<char> member(graph.node_count(), 0);
  for (int v : set) member[v] = 1;
  std::set<int> out;
  for (int v : set)
    for (int w : graph.neighbours(v))
      if (!member[w]) out.insert(w);
  return std::vector<int>(out.begin(), out.end());
}

}  // namespace

std::vector<FootprintSpec> build_footprints(const Mesh& process_mesh,
                                            const Mesh& param_mesh,
                                            const DependencyGraph& process_graph,
                                            const BasisMatrix& data_basis,
                                            int extra_rings) {
  // b_I evaluated at the process vertices marks supp(b_I) membership
  const BasisMatrix b_at_vertices =
      eval_basis_matrix(param_mesh, process_mesh.vertices());
  const Eigen::Index n_proc = process_mesh.vertex_count();
  const Eigen::Index n_param = param_mesh.vertex_count();
  std::vector<std::vector<char>> inside(
      n_param, std::vector<char>(n_proc, 0));
  const auto& b = b_at_vertices.matrix();
  for (Eigen::Index v = 0; v < n_proc; ++v) {
    using Iter = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
    for (Iter it(b, v); it; ++it)
      if (it.value() > 1e-12) inside[it.col()][v] = 1;
  }
  const auto& mesh_adj = process_mesh.vertex_neighbours();
  std::vector<FootprintSpec> out(n_param);
  for (Eigen::Index i = 0; i < n_param; ++i) {
    std::vector<int> minimal;
    for (Eigen::Index v = 0; v < n_proc; ++v) {
      if (!inside[i][v]) continue;
      bool all_in = true;
      for (int w : mesh_adj[v])
        if (!inside[i][w]) {
          all_in = false;
          break;
        }
      if (all_in) minimal.push_back(static_cast<int>(v));
    }
    if (minimal.empty())
      throw ConfigError(
          "empty effective footprint: parameter mesh too fine for the "
          "process mesh (coefficient " + std::to_string(i) + ")");
    FootprintSpec fp;
    fp.process_set = extra_rings > 0
                         ? ring_expand(process_graph, minimal, extra_rings)
                         : minimal;
    fp.blanket = blanket_of(process_graph, fp.process_set);
    fp.data_set = data_footprint(data_basis, fp.process_set);
    out[i] = std::move(fp);
  }
  return out;
}

Workspace build_workspace(const ModelSpec& spec,
                          std::shared_ptr<const DataChunkProvider> chunks) {
  Workspace ws;
  ws.scales.resize(spec.scales.size());
  const Eigen::MatrixXd& locs = spec.data.locations;

  for (std::size_t k = 0; k < spec.scales.size(); ++k) {
    ScaleWorkspace& sw = ws.scales[k];
    const Mesh& mesh = *spec.scales[k].process_mesh;
    sw.ops = assemble_fem_operators(mesh);
    sw.basis = eval_basis_matrix(mesh, locs);
    sw.process_graph = pattern_graph(sw.ops.gcg);
    if (k == 0) continue;

    const Mesh& pmesh = *spec.scales[k].param_mesh;
    sw.param_at_vertices = eval_basis_matrix(pmesh, mesh.vertices());
    sw.param_influence.assign(pmesh.vertex_count(), {});
    {
      const auto& p = sw.param_at_vertices.matrix();
      for (Eigen::Index v = 0; v < p.rows(); ++v) {
        using Iter =
            Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
        for (Iter it(p, v); it; ++it)
          if (it.value() > 1e-12)
            sw.param_influence[it.col()].emplace_back(static_cast<int>(v),
                                                      it.value());
      }
    }
    sw.footprints =
        build_footprints(mesh, pmesh, sw.process_graph, sw.basis,
                         spec.options.footprint_rings);
    std::vector<std::vector<int>> t_sets, blankets, influence;
    for (const auto& fp : sw.footprints) {
      t_sets.push_back(fp.process_set);
      blankets.push_back(fp.blanket);
    }
    influence.resize(sw.param_influence.size());
    for (std::size_t i = 0; i < sw.param_influence.size(); ++i)
      for (const auto& [v, w] : sw.param_influence[i])
        influence[i].push_back(v);
    sw.theta_graph = build_param_dependency_graph(
        sw.process_graph, sw.basis, influence, t_sets, blankets);
    sw.theta_colours = colour_escalating(sw.theta_graph, 4);

    // per-vertex data counts: each datum counts toward its max-weight vertex
    std::vector<int> data_counts(mesh.vertex_count(), 0);
    const auto& a = sw.basis.matrix();
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      using Iter = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
      int best = -1;
      double best_w = -1.0;
      for (Iter it(a, r); it; ++it)
        if (it.value() > best_w) {
          best_w = it.value();
          best = static_cast<int>(it.col());
        }
      if (best >= 0) ++data_counts[best];
    }
    sw.tilings = build_tilings(mesh, spec.options.tile_extent,
                               spec.options.min_tile_data,
                               spec.options.min_tile_basis, data_counts);
    for (int p = 0; p < 3; ++p) {
      sw.tile_colours[p] =
          colour_escalating(tile_supergraph(sw.tilings[p], sw.process_graph), 4);
      auto& tfps = sw.tile_footprints[p];
      tfps.resize(sw.tilings[p].tiles.size());
      for (std::size_t t = 0; t < sw.tilings[p].tiles.size(); ++t) {
        FootprintSpec fp;
        fp.process_set = sw.tilings[p].tiles[t];
        fp.blanket = blanket_of(sw.process_graph, fp.process_set);
        fp.data_set = data_footprint(sw.basis, fp.process_set);
        tfps[t] = std::move(fp);
      }
    }
  }

  ws.eps_basis = eval_basis_matrix(*spec.eps_mesh, locs);
  ws.eps_footprints.resize(spec.eps_mesh->vertex_count());
  for (Eigen::Index i = 0; i < spec.eps_mesh->vertex_count(); ++i)
    ws.eps_footprints[i] =
        data_footprint(ws.eps_basis, {static_cast<int>(i)});
  ws.eps_colours = colour_escalating(mesh_edge_graph(*spec.eps_mesh), 4);

  if (chunks) {
    ws.chunks = std::move(chunks);
  } else {
    std::vector<Eigen::SparseMatrix<double, Eigen::RowMajor>> bases;
    for (const auto& sw : ws.scales) bases.emplace_back(sw.basis.matrix());
    ws.chunks = std::make_shared<InMemoryChunks>(spec.data.values,
                                                 std::move(bases));
  }
  return ws;
}

}  // namespace msgmrf
