#include "msgmrf/sparse.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/SparseCholesky>

#include "msgmrf/errors.hpp"

namespace msgmrf {

SparseSymmetric::SparseSymmetric(
    Eigen::Index dim, const std::vector<Eigen::Triplet<double>>& entries) {
  if (dim < 1) throw DimensionMismatch("SparseSymmetric dim must be >= 1");
  std::vector<Eigen::Triplet<double>> folded;
  folded.reserve(entries.size());
  for (const auto& t : entries) {
    if (t.row() < 0 || t.row() >= dim || t.col() < 0 || t.col() >= dim)
      throw IndexOutOfRange("triplet outside matrix");
    if (t.row() >= t.col())
      folded.emplace_back(t.row(), t.col(), t.value());
    else
      folded.emplace_back(t.col(), t.row(), t.value());
  }
  lower_.resize(dim, dim);
  lower_.setFromTriplets(folded.begin(), folded.end());
  lower_.prune([](Eigen::Index, Eigen::Index, double v) { return v != 0.0; });
  lower_.makeCompressed();
}

SparseSymmetric SparseSymmetric::from_lower(Eigen::SparseMatrix<double> lower) {
  SparseSymmetric out;
  lower.prune([](Eigen::Index, Eigen::Index, double v) { return v != 0.0; });
  lower.makeCompressed();
  out.lower_ = std::move(lower);
  return out;
}

SparseSymmetric SparseSymmetric::from_dense(const Eigen::MatrixXd& dense,
                                            double prune_tol) {
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index j = 0; j < dense.cols(); ++j)
    for (Eigen::Index i = j; i < dense.rows(); ++i)
      if (std::abs(dense(i, j)) > prune_tol)
        trips.emplace_back(static_cast<int>(i), static_cast<int>(j),
                           dense(i, j));
  return SparseSymmetric(dense.rows(), trips);
}

Eigen::SparseMatrix<double> SparseSymmetric::full() const {
  Eigen::SparseMatrix<double> out =
      lower_.selfadjointView<Eigen::Lower>();
  out.makeCompressed();
  return out;
}

Eigen::MatrixXd SparseSymmetric::dense() const {
  return Eigen::MatrixXd(full());
}

Eigen::VectorXd SparseSymmetric::multiply(const Eigen::VectorXd& x) const {
  if (x.size() != dim()) throw DimensionMismatch("multiply rhs size");
  return lower_.selfadjointView<Eigen::Lower>() * x;
}

SparseSymmetric SparseSymmetric::submatrix(const std::vector<int>& idx) const {
  std::vector<int> local(dim(), -1);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    if (idx[a] < 0 || idx[a] >= dim())
      throw IndexOutOfRange("submatrix index");
    local[idx[a]] = static_cast<int>(a);
  }
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < lower_.outerSize(); ++k) {
    if (local[k] < 0) continue;
    for (Eigen::SparseMatrix<double>::InnerIterator it(lower_, k); it; ++it) {
      const int li = local[it.row()];
      if (li < 0) continue;
      trips.emplace_back(li, local[k], it.value());
    }
  }
  return SparseSymmetric(static_cast<Eigen::Index>(idx.size()), trips);
}

Eigen::SparseMatrix<double> SparseSymmetric::block(
    const std::vector<int>& rows, const std::vector<int>& cols) const {
  std::vector<int> row_local(dim(), -1), col_local(dim(), -1);
  for (std::size_t a = 0; a < rows.size(); ++a) row_local[rows[a]] = int(a);
  for (std::size_t a = 0; a < cols.size(); ++a) col_local[cols[a]] = int(a);
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < lower_.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(lower_, k); it; ++it) {
      const int i = static_cast<int>(it.row());
      const int j = static_cast<int>(it.col());
      // mirrored entry (i,j) and (j,i)
      if (row_local[i] >= 0 && col_local[j] >= 0)
        trips.emplace_back(row_local[i], col_local[j], it.value());
      if (i != j && row_local[j] >= 0 && col_local[i] >= 0)
        trips.emplace_back(row_local[j], col_local[i], it.value());
    }
  }
  Eigen::SparseMatrix<double> out(static_cast<Eigen::Index>(rows.size()),
                                  static_cast<Eigen::Index>(cols.size()));
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

struct CholeskyFactor::Impl {
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
  double logdet = 0.0;
  Eigen::Index dim = 0;
};

Eigen::Index CholeskyFactor::dim() const { return impl_->dim; }

double CholeskyFactor::log_determinant() const { return impl_->logdet; }

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != impl_->dim) throw DimensionMismatch("solve rhs rows");
  return impl_->llt.solve(rhs);
}

Eigen::MatrixXd CholeskyFactor::solve(const Eigen::MatrixXd& rhs) const {
  if (rhs.rows() != impl_->dim) throw DimensionMismatch("solve rhs rows");
  return impl_->llt.solve(rhs);
}

Eigen::SparseMatrix<double> CholeskyFactor::lower_factor() const {
  return impl_->llt.matrixL();
}

Eigen::VectorXi CholeskyFactor::permutation() const {
  // indices p with (P Q P^T)(i, j) = Q(p[i], p[j]) = (L L^T)(i, j)
  return impl_->llt.permutationPinv().indices();
}

Eigen::VectorXd CholeskyFactor::perturb(const Eigen::VectorXd& mean,
                                        Rng& rng) const {
  Eigen::VectorXd z = rng.normal_vector(impl_->dim);
  // x = mean + P^-1 L^-T z has covariance Q^-1
  const Eigen::SparseMatrix<double> lt =
      impl_->llt.matrixL().transpose();
  const Eigen::VectorXd w = lt.triangularView<Eigen::Upper>().solve(z);
  return mean + impl_->llt.permutationPinv() * w;
}

CholeskyFactor cholesky_factorize(const SparseSymmetric& q) {
  auto impl = std::make_shared<CholeskyFactor::Impl>();
  impl->dim = q.dim();
  impl->llt.compute(q.lower());
  if (impl->llt.info() != Eigen::Success)
    throw NotPositiveDefinite("factorization failed");
  const Eigen::VectorXd ldiag =
      Eigen::SparseMatrix<double>(impl->llt.matrixL()).diagonal();
  const double max_diag = q.diagonal().maxCoeff();
  const double pivot_floor = 1e-12 * max_diag;
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < ldiag.size(); ++i) {
    const double pivot = ldiag[i] * ldiag[i];
    if (!(pivot > pivot_floor))
      throw NotPositiveDefinite("pivot below tolerance");
    logdet += 2.0 * std::log(ldiag[i]);
  }
  impl->logdet = logdet;
  CholeskyFactor out;
  out.impl_ = std::move(impl);
  return out;
}

Eigen::MatrixXd solve(const CholeskyFactor& factor, const Eigen::MatrixXd& rhs) {
  return factor.solve(rhs);
}

double logdet(const CholeskyFactor& factor) {
  return factor.log_determinant();
}

Eigen::VectorXd sample_canonical(const CanonicalGaussian& g,
                                 std::uint64_t rng_seed) {
  if (g.shift.size() != g.precision.dim())
    throw DimensionMismatch("canonical shift length");
  const CholeskyFactor factor = cholesky_factorize(g.precision);
  const Eigen::VectorXd mean = factor.solve(g.shift);
  Rng rng(rng_seed);
  return factor.perturb(mean, rng);
}

void write_sparse_text(const SparseSymmetric& q, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << q.dim() << " " << q.nnz_lower() << "\n";
  const auto& l = q.lower();
  for (int k = 0; k < l.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(l, k); it; ++it)
      out << (it.row() + 1) << " " << (it.col() + 1) << " " << it.value()
          << "\n";
}

SparseSymmetric read_sparse_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  Eigen::Index dim = 0;
  std::size_t nnz = 0;
  in >> dim >> nnz;
  if (!in) throw MalformedRow(1, "expected 'dim nnz' header");
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(nnz);
  for (std::size_t k = 0; k < nnz; ++k) {
    long i = 0, j = 0;
    double v = 0.0;
    in >> i >> j >> v;
    if (!in) throw MalformedRow(k + 2, "expected 'i j value'");
    trips.emplace_back(static_cast<int>(i - 1), static_cast<int>(j - 1), v);
  }
  return SparseSymmetric(dim, trips);
}

}  // namespace msgmrf
