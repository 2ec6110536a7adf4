#include "msgmrf/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "msgmrf/errors.hpp"

namespace msgmrf {

DependencyGraph::DependencyGraph(int node_count,
                                 std::vector<std::pair<int, int>> edges)
    : node_count_(node_count) {
  if (node_count < 1) throw IndexOutOfRange("graph needs >= 1 node");
  edges_.reserve(edges.size());
  for (auto [i, j] : edges) {
    if (i == j) throw IndexOutOfRange("self loop");
    if (i < 0 || j < 0 || i >= node_count || j >= node_count)
      throw IndexOutOfRange("edge endpoint");
    edges_.emplace_back(std::min(i, j), std::max(i, j));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  adjacency_.assign(node_count, {});
  for (auto [i, j] : edges_) {
    adjacency_[i].push_back(j);
    adjacency_[j].push_back(i);
  }
  for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
}

bool DependencyGraph::has_edge(int i, int j) const {
  if (i == j) return false;
  const auto& adj = adjacency_[i];
  return std::binary_search(adj.begin(), adj.end(), j);
}

std::vector<std::vector<int>> Colouring::classes() const {
  std::vector<std::vector<int>> out(num_colours);
  for (std::size_t v = 0; v < colour_of.size(); ++v)
    out[colour_of[v]].push_back(static_cast<int>(v));
  return out;
}

DependencyGraph mesh_edge_graph(const Mesh& mesh) {
  std::vector<std::pair<int, int>> edges;
  for (int v = 0; v < mesh.vertex_count(); ++v)
    for (int w : mesh.vertex_neighbours()[v])
      if (w > v) edges.emplace_back(v, w);
  return DependencyGraph(static_cast<int>(mesh.vertex_count()),
                         std::move(edges));
}

DependencyGraph pattern_graph(const SparseSymmetric& q) {
  std::vector<std::pair<int, int>> edges;
  const auto& l = q.lower();
  for (int k = 0; k < l.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(l, k); it; ++it)
      if (it.row() != it.col())
        edges.emplace_back(static_cast<int>(it.col()),
                           static_cast<int>(it.row()));
  return DependencyGraph(static_cast<int>(q.dim()), std::move(edges));
}

Colouring backtracking_colour(const DependencyGraph& g, int max_colours) {
  if (max_colours < 1) throw ColouringInfeasible("max_colours < 1");
  const int n = g.node_count();
  std::vector<int> colour(n, -1);
  int v = 0;
  while (v >= 0 && v < n) {
    int next = colour[v] + 1;
    bool placed = false;
    for (int c = next; c < max_colours; ++c) {
      bool ok = true;
      for (int w : g.neighbours(v))
        if (colour[w] == c) {
          ok = false;
          break;
        }
      if (ok) {
        colour[v] = c;
        placed = true;
        break;
      }
    }
    if (placed) {
      ++v;
    } else {
      colour[v] = -1;
      --v;  // backtrack
    }
  }
  if (v < 0)
    throw ColouringInfeasible("no proper colouring with " +
                              std::to_string(max_colours) + " colours");

  // compress so colours 0..k-1 are all used
  std::vector<int> remap(max_colours, -1);
  int used = 0;
  for (int c : colour)
    if (remap[c] < 0) remap[c] = used++;
  Colouring out;
  out.colour_of.resize(n);
  for (int i = 0; i < n; ++i) out.colour_of[i] = remap[colour[i]];
  out.num_colours = used;
  return out;
}

Colouring colour_escalating(const DependencyGraph& g, int start_max) {
  int k = std::max(start_max, 1);
  for (;;) {
    try {
      return backtracking_colour(g, k);
    } catch (const ColouringInfeasible&) {
      if (k > g.node_count()) throw;
      ++k;
    }
  }
}

namespace {

struct TileKey {
  long ix, iy;
  bool operator<(const TileKey& o) const {
    return iy != o.iy ? iy < o.iy : ix < o.ix;
  }
};

Tiling tiling_from_shift(const Mesh& mesh, double tile_extent, double shift_x,
                         double shift_y, int shift_id) {
  const auto& v = mesh.vertices();
  const double xlo = v.col(0).minCoeff();
  const double ylo = mesh.dimension() == 2 ? v.col(1).minCoeff() : 0.0;
  std::map<TileKey, std::vector<int>> groups;
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    TileKey key{};
    key.ix = static_cast<long>(
        std::floor((v(i, 0) - xlo + shift_x) / tile_extent));
    key.iy = mesh.dimension() == 2
                 ? static_cast<long>(
                       std::floor((v(i, 1) - ylo + shift_y) / tile_extent))
                 : 0;
    groups[key].push_back(i);
  }
  Tiling out;
  out.shift_id = shift_id;
  out.tile_of.assign(mesh.vertex_count(), -1);
  for (auto& [key, members] : groups) {
    const int id = static_cast<int>(out.tiles.size());
    for (int m : members) out.tile_of[m] = id;
    out.tiles.push_back(std::move(members));
  }
  return out;
}

void merge_small_tiles(Tiling& tiling, const Mesh& mesh, int min_data,
                       int min_basis, const std::vector<int>& data_counts) {
  auto tile_data = [&](const std::vector<int>& members) {
    long total = 0;
    for (int m : members) total += data_counts.empty() ? 0 : data_counts[m];
    return total;
  };
  for (;;) {
    if (tiling.tiles.size() <= 1) break;
    int victim = -1;
    for (std::size_t t = 0; t < tiling.tiles.size(); ++t) {
      const auto& members = tiling.tiles[t];
      if (static_cast<int>(members.size()) < min_basis ||
          (!data_counts.empty() && tile_data(members) < min_data)) {
        victim = static_cast<int>(t);
        break;
      }
    }
    if (victim < 0) break;
    // count boundary vertices shared with each neighbouring tile
    std::map<int, std::set<int>> contact;
    for (int m : tiling.tiles[victim])
      for (int w : mesh.vertex_neighbours()[m]) {
        const int other = tiling.tile_of[w];
        if (other != victim) contact[other].insert(w);
      }
    if (contact.empty()) break;
    int best = -1;
    std::size_t best_count = 0;
    for (const auto& [other, verts] : contact) {
      if (verts.size() > best_count ||
          (verts.size() == best_count && (best < 0 || other < best))) {
        best = other;
        best_count = verts.size();
      }
    }
    auto& dst = tiling.tiles[best];
    for (int m : tiling.tiles[victim]) {
      dst.push_back(m);
      tiling.tile_of[m] = best;
    }
    std::sort(dst.begin(), dst.end());
    tiling.tiles.erase(tiling.tiles.begin() + victim);
    // reindex
    for (std::size_t t = 0; t < tiling.tiles.size(); ++t)
      for (int m : tiling.tiles[t]) tiling.tile_of[m] = static_cast<int>(t);
  }
}

}  // namespace

std::array<Tiling, 3> build_tilings(const Mesh& mesh, double tile_extent,
                                    int min_data, int min_basis,
                                    const std::vector<int>& data_counts) {
  if (!(tile_extent > 0.0)) throw InvalidTileExtent("tile_extent <= 0");
  // require roughly >= 3 vertices per axis within one tile
  double min_edge = 1e300;
  for (int s = 0; s < mesh.simplex_count(); ++s) {
    const auto a = mesh.vertex(mesh.simplices()(s, 0));
    const auto b = mesh.vertex(mesh.simplices()(s, 1));
    min_edge = std::min(min_edge, (a - b).norm());
  }
  if (tile_extent < 2.0 * min_edge * (1.0 - 1e-9))
    throw InvalidTileExtent("tile must span >= 3 mesh vertices per axis");
  if (!data_counts.empty() &&
      data_counts.size() != static_cast<std::size_t>(mesh.vertex_count()))
    throw DimensionMismatch("data_counts length");

  const double third = tile_extent / 3.0;
  std::array<Tiling, 3> out = {
      tiling_from_shift(mesh, tile_extent, 0.0, 0.0, 1),
      tiling_from_shift(mesh, tile_extent, third, 0.0, 2),
      mesh.dimension() == 2
          ? tiling_from_shift(mesh, tile_extent, 0.0, third, 3)
          : tiling_from_shift(mesh, tile_extent, 2.0 * third, 0.0, 3)};
  for (auto& t : out)
    merge_small_tiles(t, mesh, min_data, min_basis, data_counts);
  return out;
}

DependencyGraph tile_supergraph(const Tiling& tiling,
                                const DependencyGraph& process_graph) {
  if (tiling.tile_of.size() !=
      static_cast<std::size_t>(process_graph.node_count()))
    throw DimensionMismatch("tiling does not partition the graph nodes");
  std::vector<std::pair<int, int>> edges;
  for (auto [a, b] : process_graph.edges()) {
    const int ta = tiling.tile_of[a];
    const int tb = tiling.tile_of[b];
    if (ta != tb) edges.emplace_back(ta, tb);
  }
  return DependencyGraph(static_cast<int>(tiling.tiles.size()),
                         std::move(edges));
}

Colouring tile_supergraph_colour(const Tiling& tiling,
                                 const DependencyGraph& process_graph,
                                 int max_colours) {
  return backtracking_colour(tile_supergraph(tiling, process_graph),
                             max_colours);
}

DependencyGraph build_param_dependency_graph(
    const DependencyGraph& process_graph, const BasisMatrix& process_basis,
    const std::vector<std::vector<int>>& influence_sets,
    const std::vector<std::vector<int>>& footprints,
    const std::vector<std::vector<int>>& blankets) {
  const int n_param = static_cast<int>(footprints.size());
  if (n_param < 1) throw DimensionMismatch("no parameter coefficients");
  if (influence_sets.size() != footprints.size() ||
      blankets.size() != footprints.size())
    throw DimensionMismatch("per-node sets must align");

  std::set<std::pair<int, int>> edge_set;
  auto add = [&](int i, int j) {
    if (i != j) edge_set.emplace(std::min(i, j), std::max(i, j));
  };

  // writers[v]: nodes whose influence set contains process vertex v;
  // readers[v]: nodes whose footprint closure (T + blanket) contains v
  std::vector<std::vector<int>> writers(process_graph.node_count());
  std::vector<std::vector<int>> readers(process_graph.node_count());
  auto check = [&](int v) {
    if (v < 0 || v >= process_graph.node_count())
      throw IndexOutOfRange("process vertex index");
  };
  for (int i = 0; i < n_param; ++i) {
    for (int v : influence_sets[i]) {
      check(v);
      writers[v].push_back(i);
    }
    for (int v : footprints[i]) {
      check(v);
      writers[v].push_back(i);  // eta writes over T
      readers[v].push_back(i);
    }
    for (int v : blankets[i]) {
      check(v);
      readers[v].push_back(i);
    }
  }
  for (int v = 0; v < process_graph.node_count(); ++v) {
    for (std::size_t a = 0; a < writers[v].size(); ++a)
      for (std::size_t b = a + 1; b < writers[v].size(); ++b)
        add(writers[v][a], writers[v][b]);
    for (int i : writers[v])
      for (int j : readers[v]) add(i, j);
  }

  // data-footprint intersections
  std::vector<std::vector<int>> data_owners(process_basis.rows());
  for (int i = 0; i < n_param; ++i)
    for (int row : data_footprint(process_basis, footprints[i]))
      data_owners[row].push_back(i);
  for (const auto& list : data_owners)
    for (std::size_t a = 0; a < list.size(); ++a)
      for (std::size_t b = a + 1; b < list.size(); ++b)
        add(list[a], list[b]);

  return DependencyGraph(
      n_param, std::vector<std::pair<int, int>>(edge_set.begin(),
                                                edge_set.end()));
}

bool colouring_is_proper(const DependencyGraph& g, const Colouring& c) {
  if (c.colour_of.size() != static_cast<std::size_t>(g.node_count()))
    return false;
  for (auto [i, j] : g.edges())
    if (c.colour_of[i] == c.colour_of[j]) return false;
  return true;
}

void write_colouring_csv(const Colouring& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "node_id,colour\n";
  for (std::size_t v = 0; v < c.colour_of.size(); ++v)
    out << (v + 1) << "," << (c.colour_of[v] + 1) << "\n";
}

}  // namespace msgmrf
