#include "msgmrf/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>

#include "msgmrf/errors.hpp"

namespace msgmrf {

namespace {

double signed_area(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                   const Eigen::Vector2d& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) -
                (c.x() - a.x()) * (b.y() - a.y()));
}

}  // namespace

Mesh::Mesh(int dimension, Eigen::MatrixXd vertices, Eigen::MatrixXi simplices)
    : dimension_(dimension),
      vertices_(std::move(vertices)),
      simplices_(std::move(simplices)) {
  if (dimension_ != 1 && dimension_ != 2)
    throw InvalidExtent("mesh dimension must be 1 or 2");
  const Eigen::Index n = vertices_.rows();
  const Eigen::Index verts_per_simplex = dimension_ + 1;
  if (vertices_.cols() != dimension_)
    throw DimensionMismatch("vertex coordinate count");
  if (simplices_.cols() != verts_per_simplex)
    throw DimensionMismatch("simplex vertex count");
  if (n < 2 || simplices_.rows() < 1)
    throw InvalidExtent("mesh needs at least one simplex");

  for (Eigen::Index s = 0; s < simplices_.rows(); ++s) {
    for (Eigen::Index v = 0; v < verts_per_simplex; ++v) {
      const int idx = simplices_(s, v);
      if (idx < 0 || idx >= n) throw IndexOutOfRange("simplex vertex index");
    }
    if (dimension_ == 1) {
      const double len = std::abs(vertices_(simplices_(s, 0), 0) -
                                  vertices_(simplices_(s, 1), 0));
      if (len <= 0.0) throw DegenerateSimplex("zero-length segment");
    } else {
      const double area =
          signed_area(vertex(simplices_(s, 0)), vertex(simplices_(s, 1)),
                      vertex(simplices_(s, 2)));
      if (area == 0.0) throw DegenerateSimplex("zero-area triangle");
      if (area < 0.0) std::swap(simplices_(s, 1), simplices_(s, 2));
    }
  }

  neighbours_.assign(n, {});
  for (Eigen::Index s = 0; s < simplices_.rows(); ++s) {
    for (Eigen::Index a = 0; a < verts_per_simplex; ++a)
      for (Eigen::Index b = a + 1; b < verts_per_simplex; ++b) {
        neighbours_[simplices_(s, a)].push_back(simplices_(s, b));
        neighbours_[simplices_(s, b)].push_back(simplices_(s, a));
      }
  }
  for (auto& adj : neighbours_) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }

  // connectivity
  std::vector<char> seen(n, 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  Eigen::Index reached = 1;
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    for (int w : neighbours_[v])
      if (!seen[w]) {
        seen[w] = 1;
        ++reached;
        frontier.push(w);
      }
  }
  if (reached != n) throw InvalidExtent("mesh is not connected");
}

Eigen::Vector2d Mesh::vertex(Eigen::Index i) const {
  Eigen::Vector2d p = Eigen::Vector2d::Zero();
  p.x() = vertices_(i, 0);
  if (dimension_ == 2) p.y() = vertices_(i, 1);
  return p;
}

BasisMatrix::BasisMatrix(Eigen::Index rows, Eigen::Index cols,
                         const std::vector<Eigen::Triplet<double>>& entries) {
  mat_.resize(rows, cols);
  mat_.setFromTriplets(entries.begin(), entries.end());
  mat_.makeCompressed();
}

Eigen::VectorXd BasisMatrix::apply(const Eigen::VectorXd& coefficients) const {
  if (coefficients.size() != cols())
    throw DimensionMismatch("basis coefficient length");
  return mat_ * coefficients;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> BasisMatrix::rows_subset(
    const std::vector<int>& row_idx) const {
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t a = 0; a < row_idx.size(); ++a) {
    using Iter = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
    for (Iter it(mat_, row_idx[a]); it; ++it)
      trips.emplace_back(static_cast<int>(a), static_cast<int>(it.col()),
                         it.value());
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> out(
      static_cast<Eigen::Index>(row_idx.size()), mat_.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

Eigen::SparseMatrix<double> BasisMatrix::submatrix(
    const std::vector<int>& row_idx, const std::vector<int>& col_idx) const {
  std::vector<int> col_local(cols(), -1);
  for (std::size_t a = 0; a < col_idx.size(); ++a) col_local[col_idx[a]] = int(a);
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t a = 0; a < row_idx.size(); ++a) {
    using Iter = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
    for (Iter it(mat_, row_idx[a]); it; ++it) {
      const int lc = col_local[it.col()];
      if (lc >= 0)
        trips.emplace_back(static_cast<int>(a), lc, it.value());
    }
  }
  Eigen::SparseMatrix<double> out(static_cast<Eigen::Index>(row_idx.size()),
                                  static_cast<Eigen::Index>(col_idx.size()));
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

Mesh build_grid_mesh(int dimension, const BoundingBox& extent, double spacing) {
  if (spacing <= 0.0) throw InvalidExtent("spacing must be positive");
  if (dimension == 1) {
    const double len = extent.xhi - extent.xlo;
    if (len <= spacing * (1.0 - 1e-12))
      throw InvalidExtent("spacing exceeds extent");
    const Eigen::Index n =
        static_cast<Eigen::Index>(std::llround(len / spacing)) + 1;
    Eigen::MatrixXd verts(n, 1);
    for (Eigen::Index i = 0; i < n; ++i)
      verts(i, 0) = extent.xlo + len * double(i) / double(n - 1);
    Eigen::MatrixXi seg(n - 1, 2);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      seg(i, 0) = static_cast<int>(i);
      seg(i, 1) = static_cast<int>(i + 1);
    }
    return Mesh(1, verts, seg);
  }
  if (dimension != 2) throw InvalidExtent("dimension must be 1 or 2");
  const double lx = extent.xhi - extent.xlo;
  const double ly = extent.yhi - extent.ylo;
  if (lx <= spacing * (1.0 - 1e-12) || ly <= spacing * (1.0 - 1e-12))
    throw InvalidExtent("spacing exceeds extent");
  const Eigen::Index nx =
      static_cast<Eigen::Index>(std::llround(lx / spacing)) + 1;
  const Eigen::Index ny =
      static_cast<Eigen::Index>(std::llround(ly / spacing)) + 1;
  Eigen::MatrixXd verts(nx * ny, 2);
  for (Eigen::Index j = 0; j < ny; ++j)
    for (Eigen::Index i = 0; i < nx; ++i) {
      const Eigen::Index v = j * nx + i;
      verts(v, 0) = extent.xlo + lx * double(i) / double(nx - 1);
      verts(v, 1) = extent.ylo + ly * double(j) / double(ny - 1);
    }
  Eigen::MatrixXi tris(2 * (nx - 1) * (ny - 1), 3);
  Eigen::Index t = 0;
  for (Eigen::Index j = 0; j + 1 < ny; ++j)
    for (Eigen::Index i = 0; i + 1 < nx; ++i) {
      const int v00 = static_cast<int>(j * nx + i);
      const int v10 = v00 + 1;
      const int v01 = static_cast<int>((j + 1) * nx + i);
      const int v11 = v01 + 1;
      tris.row(t++) << v00, v10, v11;
      tris.row(t++) << v00, v11, v01;
    }
  return Mesh(2, verts, tris);
}

namespace {

// Uniform cell list over the mesh bounding box for point location.
struct Locator {
  const Mesh& mesh;
  double xlo, ylo, cell;
  int nx, ny;
  std::vector<std::vector<int>> bins;

  explicit Locator(const Mesh& m) : mesh(m) {
    const auto& v = m.vertices();
    xlo = v.col(0).minCoeff();
    const double xhi = v.col(0).maxCoeff();
    double yhi = 0.0;
    ylo = 0.0;
    if (m.dimension() == 2) {
      ylo = v.col(1).minCoeff();
      yhi = v.col(1).maxCoeff();
    }
    const double span = std::max(xhi - xlo, m.dimension() == 2 ? yhi - ylo : 0.0);
    const int target = static_cast<int>(
        std::ceil(std::sqrt(double(std::max<Eigen::Index>(m.simplex_count(), 1)))));
    cell = std::max(span / std::max(target, 1), 1e-300);
    nx = static_cast<int>(std::floor((xhi - xlo) / cell)) + 1;
    ny = m.dimension() == 2
             ? static_cast<int>(std::floor((yhi - ylo) / cell)) + 1
             : 1;
    bins.assign(static_cast<std::size_t>(nx) * ny, {});
    for (Eigen::Index s = 0; s < m.simplex_count(); ++s) {
      double axlo = 1e300, axhi = -1e300, aylo = 0.0, ayhi = 0.0;
      if (m.dimension() == 2) {
        aylo = 1e300;
        ayhi = -1e300;
      }
      for (int k = 0; k <= m.dimension(); ++k) {
        const auto p = m.vertex(m.simplices()(s, k));
        axlo = std::min(axlo, p.x());
        axhi = std::max(axhi, p.x());
        if (m.dimension() == 2) {
          aylo = std::min(aylo, p.y());
          ayhi = std::max(ayhi, p.y());
        }
      }
      const int i0 = clampi(int((axlo - xlo) / cell), 0, nx - 1);
      const int i1 = clampi(int((axhi - xlo) / cell), 0, nx - 1);
      const int j0 = clampi(int((aylo - ylo) / cell), 0, ny - 1);
      const int j1 = clampi(int((ayhi - ylo) / cell), 0, ny - 1);
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i)
          bins[std::size_t(j) * nx + i].push_back(static_cast<int>(s));
    }
  }

  static int clampi(int v, int lo, int hi) {
    return std::max(lo, std::min(hi, v));
  }

  const std::vector<int>& candidates(const Eigen::Vector2d& p) const {
    const int i = clampi(int((p.x() - xlo) / cell), 0, nx - 1);
    const int j = mesh.dimension() == 2
                      ? clampi(int((p.y() - ylo) / cell), 0, ny - 1)
                      : 0;
    return bins[std::size_t(j) * nx + i];
  }
};

constexpr double kInsideTol = 1e-9;

std::optional<PointLocation> locate_in(const Mesh& mesh, const Locator& loc,
                                       const Eigen::Vector2d& p) {
  for (int s : loc.candidates(p)) {
    if (mesh.dimension() == 1) {
      const double xa = mesh.vertices()(mesh.simplices()(s, 0), 0);
      const double xb = mesh.vertices()(mesh.simplices()(s, 1), 0);
      const double h = xb - xa;
      const double w1 = (p.x() - xa) / h;
      if (w1 >= -kInsideTol && w1 <= 1.0 + kInsideTol) {
        PointLocation out;
        out.simplex = s;
        const double c1 = std::min(1.0, std::max(0.0, w1));
        out.weights = {1.0 - c1, c1, 0.0};
        return out;
      }
    } else {
      const auto a = mesh.vertex(mesh.simplices()(s, 0));
      const auto b = mesh.vertex(mesh.simplices()(s, 1));
      const auto c = mesh.vertex(mesh.simplices()(s, 2));
      const double area = signed_area(a, b, c);
      const double w0 = signed_area(p, b, c) / area;
      const double w1 = signed_area(a, p, c) / area;
      const double w2 = signed_area(a, b, p) / area;
      if (w0 >= -kInsideTol && w1 >= -kInsideTol && w2 >= -kInsideTol) {
        PointLocation out;
        out.simplex = s;
        double c0 = std::max(0.0, w0), c1 = std::max(0.0, w1),
               c2 = std::max(0.0, w2);
        const double sum = c0 + c1 + c2;
        out.weights = {c0 / sum, c1 / sum, c2 / sum};
        return out;
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<PointLocation> locate_point(const Mesh& mesh,
                                          const Eigen::Vector2d& p) {
  const Locator loc(mesh);
  return locate_in(mesh, loc, p);
}

std::vector<char> inside_mask(const Mesh& mesh, const Eigen::MatrixXd& points) {
  const Locator loc(mesh);
  std::vector<char> mask(points.rows(), 0);
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    Eigen::Vector2d p = Eigen::Vector2d::Zero();
    p.x() = points(r, 0);
    if (mesh.dimension() == 2) p.y() = points(r, 1);
    mask[r] = locate_in(mesh, loc, p).has_value() ? 1 : 0;
  }
  return mask;
}

BasisMatrix eval_basis_matrix(const Mesh& mesh, const Eigen::MatrixXd& points) {
  if (points.cols() < mesh.dimension())
    throw DimensionMismatch("point coordinate count");
  const Locator loc(mesh);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(points.rows() * (mesh.dimension() + 1));
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    Eigen::Vector2d p = Eigen::Vector2d::Zero();
    p.x() = points(r, 0);
    if (mesh.dimension() == 2) p.y() = points(r, 1);
    const auto hit = locate_in(mesh, loc, p);
    if (!hit)
      throw PointOutsideMesh(static_cast<std::size_t>(r),
                             "no containing simplex");
    for (int k = 0; k <= mesh.dimension(); ++k) {
      const double w = hit->weights[k];
      if (w > 0.0)
        trips.emplace_back(static_cast<int>(r),
                           mesh.simplices()(hit->simplex, k), w);
    }
  }
  return BasisMatrix(points.rows(), mesh.vertex_count(), trips);
}

BasisMatrix eval_piecewise_constant_basis(double lo, double hi,
                                          Eigen::Index n_cells,
                                          const Eigen::VectorXd& points) {
  if (!(hi > lo) || n_cells < 1) throw InvalidExtent("piecewise-constant basis");
  const double width = (hi - lo) / double(n_cells);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(points.size());
  for (Eigen::Index r = 0; r < points.size(); ++r) {
    const double x = points[r];
    if (x < lo - kInsideTol || x > hi + kInsideTol)
      throw PointOutsideMesh(static_cast<std::size_t>(r), "outside partition");
    Eigen::Index c = static_cast<Eigen::Index>((x - lo) / width);
    c = std::min(std::max<Eigen::Index>(c, 0), n_cells - 1);
    trips.emplace_back(static_cast<int>(r), static_cast<int>(c), 1.0);
  }
  return BasisMatrix(points.size(), n_cells, trips);
}

FemOperators assemble_fem_operators(const Mesh& mesh) {
  const Eigen::Index n = mesh.vertex_count();
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> stiff;
  if (mesh.dimension() == 1) {
    for (Eigen::Index s = 0; s < mesh.simplex_count(); ++s) {
      const int a = mesh.simplices()(s, 0);
      const int b = mesh.simplices()(s, 1);
      const double h = std::abs(mesh.vertices()(b, 0) - mesh.vertices()(a, 0));
      if (h <= 0.0) throw DegenerateSimplex("zero-length segment");
      mass[a] += 0.5 * h;
      mass[b] += 0.5 * h;
      stiff.emplace_back(a, a, 1.0 / h);
      stiff.emplace_back(b, b, 1.0 / h);
      // lower triangle only: the constructor mirrors on read
      stiff.emplace_back(std::max(a, b), std::min(a, b), -1.0 / h);
    }
  } else {
    for (Eigen::Index s = 0; s < mesh.simplex_count(); ++s) {
      const int vi[3] = {mesh.simplices()(s, 0), mesh.simplices()(s, 1),
                         mesh.simplices()(s, 2)};
      const Eigen::Vector2d p[3] = {mesh.vertex(vi[0]), mesh.vertex(vi[1]),
                                    mesh.vertex(vi[2])};
      const double area = signed_area(p[0], p[1], p[2]);
      if (area <= 0.0) throw DegenerateSimplex("non-positive triangle area");
      // grad of barycentric i is perpendicular to the opposite edge
      Eigen::Vector2d grad[3];
      for (int i = 0; i < 3; ++i) {
        const Eigen::Vector2d e = p[(i + 2) % 3] - p[(i + 1) % 3];
        grad[i] = Eigen::Vector2d(-e.y(), e.x()) / (2.0 * area);
      }
      for (int i = 0; i < 3; ++i) {
        mass[vi[i]] += area / 3.0;
        for (int j = 0; j <= i; ++j) {
          if (i == j) {
            stiff.emplace_back(vi[i], vi[i], area * grad[i].dot(grad[i]));
          } else {
            stiff.emplace_back(std::max(vi[i], vi[j]), std::min(vi[i], vi[j]),
                               area * grad[i].dot(grad[j]));
          }
        }
      }
    }
  }
  FemOperators ops;
  ops.lumped_mass = std::move(mass);
  ops.stiffness = SparseSymmetric(n, stiff);

  const Eigen::SparseMatrix<double> g = ops.stiffness.full();
  const Eigen::VectorXd cinv = ops.lumped_mass.cwiseInverse();
  const Eigen::SparseMatrix<double> gcg = g * cinv.asDiagonal() * g;
  Eigen::SparseMatrix<double> gcg_lower = gcg.triangularView<Eigen::Lower>();
  ops.gcg = SparseSymmetric::from_lower(std::move(gcg_lower));
  return ops;
}

SparseSymmetric assemble_spde_precision(const FemOperators& ops,
                                        const Eigen::VectorXd& kappa,
                                        const Eigen::VectorXd& tau) {
  std::vector<int> all(ops.lumped_mass.size());
  std::iota(all.begin(), all.end(), 0);
  return assemble_spde_precision_block(ops, kappa, tau, all);
}

SparseSymmetric assemble_spde_precision_block(const FemOperators& ops,
                                              const Eigen::VectorXd& kappa,
                                              const Eigen::VectorXd& tau,
                                              const std::vector<int>& idx) {
  const Eigen::Index r = ops.lumped_mass.size();
  if (kappa.size() != r || tau.size() != r)
    throw DimensionMismatch("parameter field length");
  Eigen::VectorXd kappa_local(idx.size()), tau_local(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    if (idx[a] < 0 || idx[a] >= r) throw IndexOutOfRange("block index");
    kappa_local[a] = kappa[idx[a]];
    tau_local[a] = tau[idx[a]];
  }
  return assemble_spde_precision_local(ops, idx, kappa_local, tau_local);
}

SparseSymmetric assemble_spde_precision_local(const FemOperators& ops,
                                              const std::vector<int>& idx,
                                              const Eigen::VectorXd& kappa_local,
                                              const Eigen::VectorXd& tau_local) {
  const Eigen::Index r = ops.lumped_mass.size();
  if (kappa_local.size() != static_cast<Eigen::Index>(idx.size()) ||
      tau_local.size() != static_cast<Eigen::Index>(idx.size()))
    throw DimensionMismatch("local parameter field length");
  std::vector<int> local(r, -1);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    if (idx[a] < 0 || idx[a] >= r) throw IndexOutOfRange("block index");
    if ((!(kappa_local[a] > 0.0)) || !(tau_local[a] > 0.0))
      throw NonPositiveParameter("kappa/tau must be positive");
    local[idx[a]] = static_cast<int>(a);
  }
  // (kappa^2 C + G) C^-1 (kappa^2 C + G) with vertex-wise diagonal kappa^2
  Eigen::VectorXd k2(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a)
    k2[a] = kappa_local[a] * kappa_local[a];
  std::vector<Eigen::Triplet<double>> trips;
  const auto& gl = ops.stiffness.lower();
  for (int g : idx) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(gl, g); it; ++it) {
      const int li = local[it.row()];
      if (li < 0) continue;
      const int lj = local[g];
      trips.emplace_back(
          li, lj, tau_local[li] * tau_local[lj] * (k2[li] + k2[lj]) *
                      it.value());
    }
  }
  const auto& ml = ops.gcg.lower();
  for (int g : idx) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(ml, g); it; ++it) {
      const int li = local[it.row()];
      if (li < 0) continue;
      const int lj = local[g];
      trips.emplace_back(li, lj, tau_local[li] * tau_local[lj] * it.value());
    }
  }
  for (std::size_t a = 0; a < idx.size(); ++a) {
    const double mass_term = k2[a] * k2[a] * ops.lumped_mass[idx[a]];
    trips.emplace_back(static_cast<int>(a), static_cast<int>(a),
                       tau_local[a] * tau_local[a] * mass_term);
  }
  return SparseSymmetric(static_cast<Eigen::Index>(idx.size()), trips);
}

SparseSymmetric assemble_ar1_precision(Eigen::Index n, double phi,
                                       double sigma_v_sq) {
  if (n < 2) throw DimensionMismatch("AR(1) needs n >= 2");
  if (!(phi > -1.0 && phi < 1.0)) throw InvalidPhi("phi must be in (-1,1)");
  if (!(sigma_v_sq > 0.0)) throw NonPositiveParameter("sigma_v_sq");
  const double s = 1.0 / sigma_v_sq;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool boundary = (i == 0 || i == n - 1);
    trips.emplace_back(int(i), int(i), boundary ? s : (1.0 + phi * phi) * s);
    if (i + 1 < n) trips.emplace_back(int(i + 1), int(i), -phi * s);
  }
  return SparseSymmetric(n, trips);
}

std::vector<int> data_footprint(const BasisMatrix& basis,
                                const std::vector<int>& coefficient_indices) {
  std::vector<char> in_set(basis.cols(), 0);
  for (int c : coefficient_indices) {
    if (c < 0 || c >= basis.cols()) throw IndexOutOfRange("coefficient index");
    in_set[c] = 1;
  }
  std::vector<int> rows;
  const auto& m = basis.matrix();
  for (int r = 0; r < m.outerSize(); ++r) {
    using Iter = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
    for (Iter it(m, r); it; ++it) {
      if (in_set[it.col()]) {
        rows.push_back(r);
        break;
      }
    }
  }
  return rows;
}

void write_mesh_text(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "vertices " << mesh.vertex_count() << "\n";
  for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i) {
    out << (i + 1) << " " << mesh.vertices()(i, 0);
    if (mesh.dimension() == 2) out << " " << mesh.vertices()(i, 1);
    out << "\n";
  }
  out << "simplices " << mesh.simplex_count() << "\n";
  for (Eigen::Index s = 0; s < mesh.simplex_count(); ++s) {
    for (int k = 0; k <= mesh.dimension(); ++k)
      out << (k ? " " : "") << (mesh.simplices()(s, k) + 1);
    out << "\n";
  }
}

}  // namespace msgmrf
