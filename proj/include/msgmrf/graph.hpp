#ifndef MSGMRF_GRAPH_HPP
#define MSGMRF_GRAPH_HPP

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "msgmrf/mesh.hpp"
#include "msgmrf/sparse.hpp"

namespace msgmrf {

/// Undirected conditional-dependence graph over block indices.
class DependencyGraph {
 public:
  DependencyGraph() = default;
  DependencyGraph(int node_count, std::vector<std::pair<int, int>> edges);

  int node_count() const { return node_count_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::vector<int>& neighbours(int v) const { return adjacency_[v]; }
  bool has_edge(int i, int j) const;

 private:
  int node_count_ = 0;
  std::vector<std::pair<int, int>> edges_;       // i < j, sorted, unique
  std::vector<std::vector<int>> adjacency_;
};

/// Proper colouring; colours are 0..num_colours-1 with every colour used.
struct Colouring {
  std::vector<int> colour_of;
  int num_colours = 0;

  std::vector<std::vector<int>> classes() const;
};

/// Partition of coefficient indices into spatial tiles.
struct Tiling {
  std::vector<int> tile_of;             // coefficient -> tile id
  std::vector<std::vector<int>> tiles;  // tile id -> sorted coefficient list
  int shift_id = 1;                     // 1 | 2 | 3
};

/// Vertex adjacency graph of a mesh (simplex edges).
DependencyGraph mesh_edge_graph(const Mesh& mesh);

/// Graph with an edge wherever the matrix has a structural off-diagonal.
DependencyGraph pattern_graph(const SparseSymmetric& q);

/// Depth-first colour assignment in ascending node order with backtracking;
/// deterministic. Throws ColouringInfeasible if max_colours is too small.
Colouring backtracking_colour(const DependencyGraph& g, int max_colours);

/// backtracking_colour retried with a growing palette.
Colouring colour_escalating(const DependencyGraph& g, int start_max = 4);

/// Three shifted tilings of the mesh vertices by axis-aligned tiles: the
/// second shifted by a third of a tile in x, the third by a third in y (2D)
/// or two thirds along the line (1D). Vertices join the tile containing
/// their basis-function maximum; tiles with fewer than min_data data points
/// or min_basis coefficients are merged into the neighbouring tile sharing
/// the most boundary vertices (ties to the lowest tile id).
std::array<Tiling, 3> build_tilings(const Mesh& mesh, double tile_extent,
                                    int min_data, int min_basis,
                                    const std::vector<int>& data_counts);

/// Colours tiles so that tiles joined by any cross-tile edge of the process
/// graph get distinct colours.
Colouring tile_supergraph_colour(const Tiling& tiling,
                                 const DependencyGraph& process_graph,
                                 int max_colours = 4);

DependencyGraph tile_supergraph(const Tiling& tiling,
                                const DependencyGraph& process_graph);

/// Conditional-dependence graph over parameter coefficients. Node i writes
/// the parameter fields over its basis support (influence set) and its
/// effective process footprint T_i; it reads T_i plus its Markov blanket and
/// the data footprint of T_i. An edge joins i and j when i's influence set
/// meets j's footprint closure (or vice versa, which covers overlapping
/// supports and footprints adjacent in the process graph), or when the data
/// footprints intersect.
DependencyGraph build_param_dependency_graph(
    const DependencyGraph& process_graph, const BasisMatrix& process_basis,
    const std::vector<std::vector<int>>& influence_sets,
    const std::vector<std::vector<int>>& footprints,
    const std::vector<std::vector<int>>& blankets);

bool colouring_is_proper(const DependencyGraph& g, const Colouring& c);

/// CSV export: header node_id,colour with 1-based ids.
void write_colouring_csv(const Colouring& c, const std::string& path);

}  // namespace msgmrf

#endif
