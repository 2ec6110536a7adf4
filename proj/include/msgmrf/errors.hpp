#ifndef MSGMRF_ERRORS_HPP
#define MSGMRF_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace msgmrf {

struct NotPositiveDefinite : std::runtime_error {
  explicit NotPositiveDefinite(const std::string& what)
      : std::runtime_error("not positive definite: " + what) {}
};

struct DimensionMismatch : std::runtime_error {
  explicit DimensionMismatch(const std::string& what)
      : std::runtime_error("dimension mismatch: " + what) {}
};

struct PointOutsideMesh : std::runtime_error {
  PointOutsideMesh(std::size_t point_index, const std::string& what)
      : std::runtime_error("point outside mesh (index " +
                           std::to_string(point_index) + "): " + what),
        point_index(point_index) {}
  std::size_t point_index;
};

struct InvalidExtent : std::runtime_error {
  explicit InvalidExtent(const std::string& what)
      : std::runtime_error("invalid extent: " + what) {}
};

struct DegenerateSimplex : std::runtime_error {
  explicit DegenerateSimplex(const std::string& what)
      : std::runtime_error("degenerate simplex: " + what) {}
};

struct NonPositiveParameter : std::runtime_error {
  explicit NonPositiveParameter(const std::string& what)
      : std::runtime_error("non-positive parameter: " + what) {}
};

struct InvalidPhi : std::runtime_error {
  explicit InvalidPhi(const std::string& what)
      : std::runtime_error("invalid AR coefficient: " + what) {}
};

struct ColouringInfeasible : std::runtime_error {
  explicit ColouringInfeasible(const std::string& what)
      : std::runtime_error("colouring infeasible: " + what) {}
};

struct InvalidTileExtent : std::runtime_error {
  explicit InvalidTileExtent(const std::string& what)
      : std::runtime_error("invalid tile extent: " + what) {}
};

struct IndexOutOfRange : std::runtime_error {
  explicit IndexOutOfRange(const std::string& what)
      : std::runtime_error("index out of range: " + what) {}
};

struct InvalidQuantiles : std::runtime_error {
  explicit InvalidQuantiles(const std::string& what)
      : std::runtime_error("invalid quantiles: " + what) {}
};

struct DegenerateTrace : std::runtime_error {
  explicit DegenerateTrace(const std::string& what)
      : std::runtime_error("degenerate trace: " + what) {}
};

struct NonPositiveStd : std::runtime_error {
  explicit NonPositiveStd(const std::string& what)
      : std::runtime_error("non-positive std: " + what) {}
};

struct EmptySet : std::runtime_error {
  explicit EmptySet(const std::string& what)
      : std::runtime_error("empty set: " + what) {}
};

struct MalformedRow : std::runtime_error {
  MalformedRow(std::size_t line_number, const std::string& what)
      : std::runtime_error("malformed row at line " +
                           std::to_string(line_number) + ": " + what),
        line_number(line_number) {}
  std::size_t line_number;
};

struct MissingColumn : std::runtime_error {
  explicit MissingColumn(const std::string& what)
      : std::runtime_error("missing column: " + what) {}
};

struct RankDeficient : std::runtime_error {
  explicit RankDeficient(const std::string& what)
      : std::runtime_error("rank deficient: " + what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what)
      : std::runtime_error("config error: " + what) {}
};

}  // namespace msgmrf

#endif
