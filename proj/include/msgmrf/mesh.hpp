#ifndef MSGMRF_MESH_HPP
#define MSGMRF_MESH_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "msgmrf/sparse.hpp"

namespace msgmrf {

struct BoundingBox {
  double xlo = 0.0;
  double xhi = 1.0;
  double ylo = 0.0;
  double yhi = 1.0;
};

/// 1D chain or 2D planar triangulation with piecewise-linear (tent) bases.
/// Vertices are (n x dim); simplices are vertex-index pairs or triples with
/// positive orientation in 2D. Connected and non-degenerate by construction.
class Mesh {
 public:
  Mesh(int dimension, Eigen::MatrixXd vertices, Eigen::MatrixXi simplices);

  int dimension() const { return dimension_; }
  Eigen::Index vertex_count() const { return vertices_.rows(); }
  Eigen::Index simplex_count() const { return simplices_.rows(); }
  const Eigen::MatrixXd& vertices() const { return vertices_; }
  const Eigen::MatrixXi& simplices() const { return simplices_; }
  Eigen::Vector2d vertex(Eigen::Index i) const;

  /// Vertex adjacency (shared simplex edge).
  const std::vector<std::vector<int>>& vertex_neighbours() const {
    return neighbours_;
  }

 private:
  int dimension_;
  Eigen::MatrixXd vertices_;
  Eigen::MatrixXi simplices_;
  std::vector<std::vector<int>> neighbours_;
};

/// Sparse evaluation of basis functions at a set of points: rows index
/// points, columns index basis functions. Tent rows sum to one.
class BasisMatrix {
 public:
  BasisMatrix() = default;
  BasisMatrix(Eigen::Index rows, Eigen::Index cols,
              const std::vector<Eigen::Triplet<double>>& entries);

  Eigen::Index rows() const { return mat_.rows(); }
  Eigen::Index cols() const { return mat_.cols(); }
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& matrix() const {
    return mat_;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& coefficients) const;

  /// Rows restricted to a sorted set of row indices (all columns kept).
  Eigen::SparseMatrix<double, Eigen::RowMajor> rows_subset(
      const std::vector<int>& row_idx) const;

  /// Rows restricted to row_idx and columns to col_idx (local indexing).
  Eigen::SparseMatrix<double> submatrix(const std::vector<int>& row_idx,
                                        const std::vector<int>& col_idx) const;

 private:
  Eigen::SparseMatrix<double, Eigen::RowMajor> mat_;
};

/// Lumped mass diagonal, Neumann stiffness, and the cached triple product
/// G C^-1 G that fixes the precision sparsity pattern.
struct FemOperators {
  Eigen::VectorXd lumped_mass;
  SparseSymmetric stiffness;
  SparseSymmetric gcg;
};

/// Uniform chain (1D) or structured triangulation of a rectangle (2D, each
/// grid cell split into two triangles).
Mesh build_grid_mesh(int dimension, const BoundingBox& extent, double spacing);

/// Barycentric location of one point; nullopt when outside the hull.
struct PointLocation {
  int simplex = -1;
  std::array<double, 3> weights{};  // third unused in 1D
};
std::optional<PointLocation> locate_point(const Mesh& mesh,
                                          const Eigen::Vector2d& p);

std::vector<char> inside_mask(const Mesh& mesh, const Eigen::MatrixXd& points);

/// Tent-basis weights for every point; throws PointOutsideMesh with the
/// offending point index.
BasisMatrix eval_basis_matrix(const Mesh& mesh, const Eigen::MatrixXd& points);

/// Piecewise-constant basis on a regular 1D partition into cells of equal
/// width (used by the two-scale discretization experiment).
BasisMatrix eval_piecewise_constant_basis(double lo, double hi,
                                          Eigen::Index n_cells,
                                          const Eigen::VectorXd& points);

FemOperators assemble_fem_operators(const Mesh& mesh);

/// Q = T (K C K + K G + G K + G C^-1 G) T with K = diag(kappa^2) and
/// T = diag(tau) at the vertices, the FEM form of (kappa^2 - Lap)^2 applied
/// to tau Y; SPD for positive parameter fields.
SparseSymmetric assemble_spde_precision(const FemOperators& ops,
                                        const Eigen::VectorXd& kappa,
                                        const Eigen::VectorXd& tau);

/// Principal block of the precision over the given vertex subset, assembled
/// directly from the cached operators (local indexing in the result).
SparseSymmetric assemble_spde_precision_block(const FemOperators& ops,
                                              const Eigen::VectorXd& kappa,
                                              const Eigen::VectorXd& tau,
                                              const std::vector<int>& idx);

/// Same, with parameter fields already restricted to idx (kappa_local[a]
/// belongs to vertex idx[a]).
SparseSymmetric assemble_spde_precision_local(const FemOperators& ops,
                                              const std::vector<int>& idx,
                                              const Eigen::VectorXd& kappa_local,
                                              const Eigen::VectorXd& tau_local);

/// Tridiagonal AR(1) precision: end diagonals 1/s2, interior (1+phi^2)/s2,
/// off-diagonal -phi/s2.
SparseSymmetric assemble_ar1_precision(Eigen::Index n, double phi,
                                       double sigma_v_sq);

/// Indices of rows (data points) with a nonzero entry in any given column.
std::vector<int> data_footprint(const BasisMatrix& basis,
                                const std::vector<int>& coefficient_indices);

void write_mesh_text(const Mesh& mesh, const std::string& path);

}  // namespace msgmrf

#endif
