#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "msgmrf/errors.hpp"
#include "msgmrf/mesh.hpp"
#include "msgmrf/params.hpp"
#include "msgmrf/rng.hpp"
#include "oracles.hpp"

using namespace msgmrf;

namespace {

Eigen::MatrixXd points1d(std::initializer_list<double> xs) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) out(i++, 0) = x;
  return out;
}

// dense assembly of tau^2 (kappa^2 C + G) C^-1 (kappa^2 C + G)
Eigen::MatrixXd dense_spde_precision(const FemOperators& ops, double kappa,
                                     double tau) {
  const Eigen::MatrixXd g = ops.stiffness.dense();
  const Eigen::MatrixXd c = ops.lumped_mass.asDiagonal();
  const Eigen::MatrixXd cinv = ops.lumped_mass.cwiseInverse().asDiagonal();
  const double k2 = kappa * kappa;
  const Eigen::MatrixXd core = k2 * k2 * c + 2.0 * k2 * g + g * cinv * g;
  return tau * tau * core;
}

}  // namespace

TEST_SUITE("mesh") {

TEST_CASE("grid meshes have the expected sizes") {
  const Mesh chain = build_grid_mesh(1, {0.0, 1.0, 0.0, 0.0}, 0.5);
  CHECK(chain.vertex_count() == 3);
  CHECK(chain.simplex_count() == 2);
  CHECK(chain.vertices()(1, 0) == doctest::Approx(0.5));

  const Mesh square = build_grid_mesh(2, {0.0, 1.0, 0.0, 1.0}, 0.5);
  CHECK(square.vertex_count() == 9);
  CHECK(square.simplex_count() == 8);

  const Mesh fine = build_grid_mesh(1, {0.0, 1.0, 0.0, 0.0}, 0.001);
  CHECK(fine.vertex_count() == 1001);

  CHECK_THROWS_AS(build_grid_mesh(1, {0.0, 1.0, 0.0, 0.0}, 2.0),
                  InvalidExtent);
}

TEST_CASE("tent basis evaluation") {
  const Mesh chain = build_grid_mesh(1, {0.0, 1.0, 0.0, 0.0}, 0.5);
  const BasisMatrix b = eval_basis_matrix(chain, points1d({0.5, 0.25}));
  // exactly on a vertex: indicator row
  CHECK(b.matrix().coeff(0, 1) == doctest::Approx(1.0));
  CHECK(b.matrix().row(0).nonZeros() == 1);
  // interior point: linear interpolation weights
  CHECK(b.matrix().coeff(1, 0) == doctest::Approx(0.5));
  CHECK(b.matrix().coeff(1, 1) == doctest::Approx(0.5));

  const Mesh square = build_grid_mesh(2, {0.0, 1.0, 0.0, 1.0}, 0.5);
  // centroid of the triangle (0,0)-(0.5,0)-(0.5,0.5)
  Eigen::MatrixXd centroid(1, 2);
  centroid << 1.0 / 3.0, 1.0 / 6.0;
  const BasisMatrix bc = eval_basis_matrix(square, centroid);
  CHECK(bc.matrix().row(0).nonZeros() == 3);
  for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator
           it(bc.matrix(), 0);
       it; ++it)
    CHECK(it.value() == doctest::Approx(1.0 / 3.0));

  Eigen::MatrixXd outside(1, 2);
  outside << 2.0, 2.0;
  CHECK_THROWS_AS(eval_basis_matrix(square, outside), PointOutsideMesh);
}

TEST_CASE("partition of unity at random interior points") {
  const Mesh square = build_grid_mesh(2, {0.0, 1.0, 0.0, 1.0}, 0.2);
  Rng rng(11);
  Eigen::MatrixXd pts(200, 2);
  for (int i = 0; i < 200; ++i) {
    pts(i, 0) = rng.uniform();
    pts(i, 1) = rng.uniform();
  }
  const BasisMatrix b = eval_basis_matrix(square, pts);
  const Eigen::VectorXd sums =
      b.apply(Eigen::VectorXd::Ones(square.vertex_count()));
  for (Eigen::Index i = 0; i < sums.size(); ++i)
    CHECK(std::abs(sums[i] - 1.0) <= 1e-12);
}

TEST_CASE("FEM operators on 1D meshes match hand integration") {
  const Mesh chain = build_grid_mesh(1, {0.0, 1.0, 0.0, 0.0}, 0.5);
  const FemOperators ops = assemble_fem_operators(chain);
  CHECK(ops.lumped_mass[0] == doctest::Approx(0.25));
  CHECK(ops.lumped_mass[1] == doctest::Approx(0.5));
  CHECK(ops.lumped_mass[2] == doctest::Approx(0.25));
  const Eigen::MatrixXd g = ops.stiffness.dense();
  CHECK(g(1, 0) == doctest::Approx(-2.0));  // -1/h with h = 0.5
  CHECK(g(1, 1) == doctest::Approx(4.0));   // 2/h
  CHECK((g * Eigen::VectorXd::Ones(3)).norm() == doctest::Approx(0.0));
}

TEST_CASE("stiffness annihilates constants in 2D") {
  const Mesh square = build_grid_mesh(2, {0.0, 1.0, 0.0, 1.0}, 0.25);
  const FemOperators ops = assemble_fem_operators(square);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(square.vertex_count());
  CHECK((ops.stiffness.dense() * ones).cwiseAbs().maxCoeff() < 1e-12);
  // total lumped mass equals the domain area
  CHECK(ops.lumped_mass.sum() == doctest::Approx(1.0));
}

TEST_CASE("spde precision matches the dense assembly oracle") {
  const Mesh chain = build_grid_mesh(1, {0.0, 2.0, 0.0, 0.0}, 0.25);
  const FemOperators ops = assemble_fem_operators(chain);
  const Eigen::Index r = chain.vertex_count();
  const SparseSymmetric q = assemble_spde_precision(
      ops, Eigen::VectorXd::Ones(r), Eigen::VectorXd::Ones(r));
  CHECK(q.dense().isApprox(dense_spde_precision(ops, 1.0, 1.0), 1e-12));
  // SPD: factorization succeeds
  CHECK_NOTHROW(cholesky_factorize(q));

  // a non-unit kappa pins the kappa^2 diagonal of the operator
  const SparseSymmetric qk = assemble_spde_precision(
      ops, Eigen::VectorXd::Constant(r, 1.7), Eigen::VectorXd::Ones(r));
  CHECK(qk.dense().isApprox(dense_spde_precision(ops, 1.7, 1.0), 1e-12));

  // doubling tau scales the precision by 4
  const SparseSymmetric q2 = assemble_spde_precision(
      ops, Eigen::VectorXd::Ones(r), 2.0 * Eigen::VectorXd::Ones(r));
  CHECK(q2.dense().isApprox(4.0 * q.dense(), 1e-12));

  CHECK_THROWS_AS(
      assemble_spde_precision(ops, Eigen::VectorXd::Zero(r),
                              Eigen::VectorXd::Ones(r)),
      NonPositiveParameter);
}

TEST_CASE("block assembly equals the principal submatrix of the full Q") {
  const Mesh square = build_grid_mesh(2, {0.0, 1.0, 0.0, 1.0}, 0.2);
  const FemOperators ops = assemble_fem_operators(square);
  Rng rng(5);
  const Eigen::Index r = square.vertex_count();
  Eigen::VectorXd kappa(r), tau(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    kappa[i] = 1.0 + rng.uniform();
    tau[i] = 0.5 + rng.uniform();
  }
  const SparseSymmetric q = assemble_spde_precision(ops, kappa, tau);
  std::vector<int> idx = {0, 3, 7, 8, 11, 12, 13, 20};
  const SparseSymmetric qb =
      assemble_spde_precision_block(ops, kappa, tau, idx);
  const Eigen::MatrixXd qd = q.dense();
  Eigen::MatrixXd expect(idx.size(), idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = 0; b < idx.size(); ++b)
      expect(a, b) = qd(idx[a], idx[b]);
  CHECK(qb.dense().isApprox(expect, 1e-12));
}

TEST_CASE("1D stationary variance matches the spectral-density value") {
  // For (kappa^2 - d^2/dx^2)(tau Y) = W on the line the variance is
  // 1/(4 kappa^3 tau^2); quadrature of 1/(2 pi (kappa^2 + w^2)^2).
  const Mesh chain = build_grid_mesh(1, {0.0, 50.0, 0.0, 0.0}, 0.25);
  const FemOperators ops = assemble_fem_operators(chain);
  const Eigen::Index r = chain.vertex_count();
  const double kappa = 1.5, tau = 0.7;
  const SparseSymmetric q = assemble_spde_precision(
      ops, Eigen::VectorXd::Constant(r, kappa),
      Eigen::VectorXd::Constant(r, tau));
  const Eigen::MatrixXd cov = oracles::dense_inverse(q.dense());
  const double expected = 1.0 / (4.0 * kappa * kappa * kappa * tau * tau);
  for (Eigen::Index v = 0; v < r; ++v) {
    const double x = chain.vertices()(v, 0);
    if (x < 10.0 || x > 40.0) continue;
    CHECK(cov(v, v) == doctest::Approx(expected).epsilon(0.05));
  }
}

TEST_CASE("2D stationary variance matches sigma^2 from the parameter map") {
  const Mesh square = build_grid_mesh(2, {0.0, 8.0, 0.0, 8.0}, 0.2);
  const FemOperators ops = assemble_fem_operators(square);
  const double sigma = 1.3, rho = 2.0;
  const NaturalParams np =
      natural_from_interpretable({std::log(sigma), std::log(rho), 1.0});
  const Eigen::Index r = square.vertex_count();
  const SparseSymmetric q = assemble_spde_precision(
      ops, Eigen::VectorXd::Constant(r, std::exp(np.log_kappa)),
      Eigen::VectorXd::Constant(r, std::exp(np.log_tau)));
  const Eigen::MatrixXd cov = oracles::dense_inverse(q.dense());
  double max_rel = 0.0;
  int checked = 0;
  for (Eigen::Index v = 0; v < r; ++v) {
    const double x = square.vertices()(v, 0);
    const double y = square.vertices()(v, 1);
    if (x < 3.0 || x > 5.0 || y < 3.0 || y > 5.0) continue;
    max_rel = std::max(max_rel,
                       std::abs(cov(v, v) - sigma * sigma) / (sigma * sigma));
    ++checked;
  }
  CHECK(checked > 50);
  CHECK(max_rel < 0.05);
}

TEST_CASE("AR(1) precision entries and sampling correlation") {
  const SparseSymmetric q = assemble_ar1_precision(3, 0.9, 0.2);
  const Eigen::MatrixXd d = q.dense();
  CHECK(d(0, 0) == doctest::Approx(5.0));
  CHECK(d(1, 1) == doctest::Approx(9.05));
  CHECK(d(2, 2) == doctest::Approx(5.0));
  CHECK(d(1, 0) == doctest::Approx(-4.5));

  const SparseSymmetric ind = assemble_ar1_precision(4, 0.0, 0.5);
  CHECK(ind.dense().isApprox(2.0 * Eigen::MatrixXd::Identity(4, 4)));

  CHECK_THROWS_AS(assemble_ar1_precision(5, 1.0, 0.2), InvalidPhi);

  // lag-1 empirical correlation near phi at interior sites
  const SparseSymmetric q99 = assemble_ar1_precision(99, 0.9, 0.2);
  const CholeskyFactor f = cholesky_factorize(q99);
  Rng rng(2024);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(99);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  const int n = 100000;
  for (int s = 0; s < n; ++s) {
    const Eigen::VectorXd draw = f.perturb(zero, rng);
    sxy += draw[49] * draw[50];
    sxx += draw[49] * draw[49];
    syy += draw[50] * draw[50];
  }
  CHECK(sxy / std::sqrt(sxx * syy) == doctest::Approx(0.9).epsilon(0.01));
}

TEST_CASE("AR(1) inverse has the stationary correlation structure") {
  const double phi = 0.7, s2 = 0.3;
  const SparseSymmetric q = assemble_ar1_precision(5, phi, s2);
  const Eigen::MatrixXd cov = oracles::dense_inverse(q.dense());
  // covariance recursion for the stationary AR(1): C(0) = s2/(1-phi^2),
  // C(j+1) = phi C(j)
  double expected = s2 / (1.0 - phi * phi);
  for (int j = 0; j < 5; ++j) {
    CHECK(std::abs(cov(0, j) - expected) < 1e-8);
    expected *= phi;
  }
}

TEST_CASE("data footprints") {
  const Mesh chain = build_grid_mesh(1, {0.0, 1.0, 0.0, 0.0}, 0.5);
  const BasisMatrix b = eval_basis_matrix(chain, points1d({0.25, 0.9}));
  CHECK(data_footprint(b, {0}) == std::vector<int>{0});
  CHECK(data_footprint(b, {2}) == std::vector<int>{1});
  // vertex 1 covers both data points
  CHECK(data_footprint(b, {1}).size() == 2);

  // a coefficient with no covering data
  const BasisMatrix b2 = eval_basis_matrix(chain, points1d({0.9}));
  CHECK(data_footprint(b2, {0}).empty());

  // union property on a random configuration
  const Mesh square = build_grid_mesh(2, {0.0, 1.0, 0.0, 1.0}, 0.25);
  Rng rng(3);
  Eigen::MatrixXd pts(60, 2);
  for (int i = 0; i < 60; ++i) {
    pts(i, 0) = rng.uniform();
    pts(i, 1) = rng.uniform();
  }
  const BasisMatrix bs = eval_basis_matrix(square, pts);
  const std::vector<int> s1 = {0, 5, 6};
  const std::vector<int> s2 = {10, 11, 17};
  std::vector<int> both = s1;
  both.insert(both.end(), s2.begin(), s2.end());
  std::set<int> expect;
  for (int r : data_footprint(bs, s1)) expect.insert(r);
  for (int r : data_footprint(bs, s2)) expect.insert(r);
  const std::vector<int> got = data_footprint(bs, both);
  CHECK(std::set<int>(got.begin(), got.end()) == expect);

  // disjoint basis supports give disjoint footprints
  const std::vector<int> far1 = {0};
  const std::vector<int> far2 = {24};
  std::set<int> f1, f2;
  for (int r : data_footprint(bs, far1)) f1.insert(r);
  for (int r : data_footprint(bs, far2)) f2.insert(r);
  for (int r : f1) CHECK(f2.count(r) == 0);
}

TEST_CASE("piecewise-constant basis") {
  Eigen::VectorXd pts(3);
  pts << 0.05, 0.55, 1.0;
  const BasisMatrix b = eval_piecewise_constant_basis(0.0, 1.0, 10, pts);
  CHECK(b.matrix().coeff(0, 0) == doctest::Approx(1.0));
  CHECK(b.matrix().coeff(1, 5) == doctest::Approx(1.0));
  CHECK(b.matrix().coeff(2, 9) == doctest::Approx(1.0));  // right edge
  for (int r = 0; r < 3; ++r) CHECK(b.matrix().row(r).sum() == 1.0);
}

TEST_CASE("mesh text export") {
  const Mesh chain = build_grid_mesh(1, {0.0, 1.0, 0.0, 0.0}, 0.5);
  const std::string path = "mesh_export_test.txt";
  write_mesh_text(chain, path);
  std::ifstream in(path);
  std::string word;
  in >> word;
  CHECK(word == "vertices");
  long n = 0;
  in >> n;
  CHECK(n == 3);
  std::remove(path.c_str());
}

}  // TEST_SUITE
