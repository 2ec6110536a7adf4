#ifndef MSGMRF_MODEL_HPP
#define MSGMRF_MODEL_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "msgmrf/graph.hpp"
#include "msgmrf/io.hpp"
#include "msgmrf/mesh.hpp"
#include "msgmrf/params.hpp"
#include "msgmrf/sparse.hpp"

namespace msgmrf {

/// One scale of the hierarchical model. Scale 0 is stationary with scalar
/// (sigma0, rho0); scales k >= 1 carry parameter fields on param_mesh.
struct ScaleSpec {
  std::shared_ptr<const Mesh> process_mesh;
  std::shared_ptr<const Mesh> param_mesh;  // null for k = 0
  GaussianPrior sigma_prior;
  GaussianPrior rho_prior;
};

struct SamplerOptions {
  int footprint_rings = 0;       // extra Markov-blanket rings beyond minimal
  double tile_extent = 0.25;
  int min_tile_data = 100;
  int min_tile_basis = 200;
  int adapt_every = 30;
  int adapt_until = 2000;
  double target_accept_pair = 0.25;    // 2-dim (sigma, rho) blocks
  double target_accept_scalar = 0.44;  // scalar theta_eps blocks
  double initial_proposal_variance = 1e-3;
  double init_eta0_perturb_variance = 0.04;
  double init_etak_variance = 0.01;
  bool fix_theta0 = false;
  bool fix_thetak = false;
  bool fix_theta_eps = false;
  double guideline_scale = 1.0;  // scales the r_eta0 guidance bounds
};

/// Full model definition: K+1 scales, measurement-error field, data.
struct ModelSpec {
  int K = 1;
  std::vector<ScaleSpec> scales;  // size K+1
  std::shared_ptr<const Mesh> eps_mesh;
  GaussianPrior eps_prior;
  PointData data;
  SamplerOptions options;
};

/// Triangulation-guideline warnings (not errors).
std::vector<std::string> validate_spec(const ModelSpec& spec);

/// Serves data values and basis rows per footprint chunk; implementations
/// must be safe for concurrent reads.
class DataChunkProvider {
 public:
  virtual ~DataChunkProvider() = default;
  virtual Eigen::Index data_count() const = 0;
  virtual Eigen::VectorXd z_chunk(const std::vector<int>& rows) const = 0;
  /// Rows of A_k for the given data indices, all columns kept.
  virtual Eigen::SparseMatrix<double, Eigen::RowMajor> basis_rows(
      int scale, const std::vector<int>& rows) const = 0;
};

class InMemoryChunks : public DataChunkProvider {
 public:
  InMemoryChunks(Eigen::VectorXd z,
                 std::vector<Eigen::SparseMatrix<double, Eigen::RowMajor>> a);
  Eigen::Index data_count() const override { return z_.size(); }
  Eigen::VectorXd z_chunk(const std::vector<int>& rows) const override;
  Eigen::SparseMatrix<double, Eigen::RowMajor> basis_rows(
      int scale, const std::vector<int>& rows) const override;

 private:
  Eigen::VectorXd z_;
  std::vector<Eigen::SparseMatrix<double, Eigen::RowMajor>> a_;
};

/// Row-indexed binary cache of the same content, for runs where the basis
/// matrices should not stay resident.
class FileBackedChunks : public DataChunkProvider {
 public:
  static void save(const Eigen::VectorXd& z,
                   const std::vector<const BasisMatrix*>& a,
                   const std::string& directory);
  explicit FileBackedChunks(const std::string& directory);
  Eigen::Index data_count() const override { return z_.size(); }
  Eigen::VectorXd z_chunk(const std::vector<int>& rows) const override;
  Eigen::SparseMatrix<double, Eigen::RowMajor> basis_rows(
      int scale, const std::vector<int>& rows) const override;

 private:
  Eigen::VectorXd z_;
  struct ScaleFile {
    std::string path;
    Eigen::Index cols = 0;
    std::vector<std::uint64_t> offsets;  // entry offset per row, +1 sentinel
  };
  std::vector<ScaleFile> scales_;
};

/// Effective process footprint T and data footprint F of one parameter
/// coefficient, plus the Markov blanket of T used in conditionals.
struct FootprintSpec {
  std::vector<int> process_set;   // T
  std::vector<int> blanket;       // Q-pattern neighbours of T outside T
  std::vector<int> data_set;      // F = data_footprint(T)
};

/// Everything derivable from the spec alone: bases, FEM operators, graphs,
/// colourings, tilings, footprints. Immutable once built.
struct ScaleWorkspace {
  FemOperators ops;
  BasisMatrix basis;                       // A_k at data locations
  DependencyGraph process_graph;           // Q-pattern graph
  // scales k >= 1 only:
  BasisMatrix param_at_vertices;           // P_k: process vertices x r_theta
  // column I of P_k as (process vertex, weight) pairs: where theta_k^I acts
  std::vector<std::vector<std::pair<int, double>>> param_influence;
  std::vector<FootprintSpec> footprints;   // per parameter coefficient
  DependencyGraph theta_graph;
  Colouring theta_colours;
  std::array<Tiling, 3> tilings;
  std::array<Colouring, 3> tile_colours;
  std::array<std::vector<FootprintSpec>, 3> tile_footprints;  // per tile
};

struct Workspace {
  std::vector<ScaleWorkspace> scales;
  BasisMatrix eps_basis;                    // b_eps at data locations
  std::vector<std::vector<int>> eps_footprints;
  Colouring eps_colours;
  std::shared_ptr<const DataChunkProvider> chunks;
};

Workspace build_workspace(const ModelSpec& spec,
                          std::shared_ptr<const DataChunkProvider> chunks = {});

/// Current Gibbs state.
struct ModelState {
  std::vector<Eigen::VectorXd> eta;          // size K+1
  Eigen::Vector2d theta0;                    // (log sigma0, log rho0)
  std::vector<Eigen::VectorXd> theta_sigma;  // index k-1 for scale k
  std::vector<Eigen::VectorXd> theta_rho;
  Eigen::VectorXd theta_eps;
  long iteration = 0;
  int tiling_position = 0;  // cycles 0 -> 1 -> 2 -> 0
};

/// Minimal effective process footprints: process vertices whose own and
/// whose neighbours' basis maxima lie inside supp of the parameter basis
/// function, optionally grown by whole Markov-blanket rings.
std::vector<FootprintSpec> build_footprints(const Mesh& process_mesh,
                                            const Mesh& param_mesh,
                                            const DependencyGraph& process_graph,
                                            const BasisMatrix& data_basis,
                                            int extra_rings);

}  // namespace msgmrf

#endif
