#ifndef MSGMRF_SPARSE_HPP
#define MSGMRF_SPARSE_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "msgmrf/rng.hpp"

namespace msgmrf {

/// Sparse symmetric matrix storing only the lower triangle. Immutable after
/// construction; explicit zeros are pruned and upper-triangle input entries
/// are mirrored into the lower triangle.
class SparseSymmetric {
 public:
  SparseSymmetric() = default;
  SparseSymmetric(Eigen::Index dim,
                  const std::vector<Eigen::Triplet<double>>& entries);

  /// Wraps a matrix that is already lower-triangular (no checks beyond shape).
  static SparseSymmetric from_lower(Eigen::SparseMatrix<double> lower);
  static SparseSymmetric from_dense(const Eigen::MatrixXd& dense,
                                    double prune_tol = 0.0);

  Eigen::Index dim() const { return lower_.rows(); }
  Eigen::Index nnz_lower() const { return lower_.nonZeros(); }
  const Eigen::SparseMatrix<double>& lower() const { return lower_; }

  /// Full mirrored matrix.
  Eigen::SparseMatrix<double> full() const;
  Eigen::MatrixXd dense() const;
  Eigen::VectorXd diagonal() const { return lower_.diagonal(); }

  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;

  /// Principal submatrix Q[idx, idx] with local (0..idx.size()-1) indexing.
  SparseSymmetric submatrix(const std::vector<int>& idx) const;

  /// Rectangular block Q[rows, cols] as a general sparse matrix. The two
  /// index sets are expected to be disjoint.
  Eigen::SparseMatrix<double> block(const std::vector<int>& rows,
                                    const std::vector<int>& cols) const;

 private:
  Eigen::SparseMatrix<double> lower_;
};

/// Permuted sparse Cholesky factorization L L^T = P Q P^T. Cheap to copy and
/// safe to share across workers.
class CholeskyFactor {
 public:
  Eigen::Index dim() const;
  double log_determinant() const;
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  Eigen::SparseMatrix<double> lower_factor() const;
  Eigen::VectorXi permutation() const;

  /// mean + P^-1 L^-T z for standard-normal z: one draw from Gau(mean, Q^-1).
  Eigen::VectorXd perturb(const Eigen::VectorXd& mean, Rng& rng) const;

 private:
  friend CholeskyFactor cholesky_factorize(const SparseSymmetric& q);
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// Gaussian in canonical (information) form: precision Q and shift b = Q mu.
struct CanonicalGaussian {
  SparseSymmetric precision;
  Eigen::VectorXd shift;
};

/// Factorizes an SPD matrix with a fill-reducing (AMD) ordering chosen from
/// the sparsity pattern. Throws NotPositiveDefinite when a pivot falls at or
/// below 1e-12 times the largest diagonal entry.
CholeskyFactor cholesky_factorize(const SparseSymmetric& q);

Eigen::MatrixXd solve(const CholeskyFactor& factor, const Eigen::MatrixXd& rhs);

double logdet(const CholeskyFactor& factor);

/// Exact draw from Gau(Q^-1 b, Q^-1); deterministic given the seed.
Eigen::VectorXd sample_canonical(const CanonicalGaussian& g,
                                 std::uint64_t rng_seed);

/// Text fixture format: header "dim nnz", then 1-based "i j value" triplets
/// of the lower triangle.
void write_sparse_text(const SparseSymmetric& q, const std::string& path);
SparseSymmetric read_sparse_text(const std::string& path);

}  // namespace msgmrf

#endif
