#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gh/numerics.hpp"

namespace gh {

enum class StructureKind { analytic_etf, approximate, explicit_vertices };

std::string to_string(StructureKind kind);
StructureKind parse_structure_kind(const std::string& text);

/// K unit vertices in R^d (stored as columns of a d×K matrix) with a common
/// pairwise inner product. For `approximate` structures `target_cosine` holds
/// the achieved maximum pairwise cosine; for `explicit_vertices` it holds the
/// maximum off-diagonal cosine of the supplied vertices.
class GeometricStructure {
 public:
  GeometricStructure(Matrix vertices, Real target_cosine, StructureKind kind);

  const Matrix& vertices() const noexcept { return vertices_; }
  Real target_cosine() const noexcept { return target_cosine_; }
  StructureKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return vertices_.rows(); }
  std::size_t count() const noexcept { return vertices_.cols(); }
  Vector vertex(std::size_t k) const { return vertices_.col(k); }

 private:
  Matrix vertices_;
  Real target_cosine_;
  StructureKind kind_;
};

struct ApproximateParams {
  Real tau_u = 0.1;
  std::size_t steps = 2000;
  Real lr = 0.1;
  Real lr_min = 1e-3;
};

/// Simplex ETF sqrt(K/(K-1)) * U (I - 11^T/K) for a random partial orthogonal U.
GeometricStructure build_etf(Rng& rng, std::size_t d, std::size_t k);

/// Gradient-descent approximation of maximally separated vertices, minimizing
/// log sum_ij exp(<M_i, M_j> / tau_u) with per-step mean-centering and
/// re-projection onto the sphere.
GeometricStructure build_approximate(Rng& rng, std::size_t d, std::size_t k,
                                     const ApproximateParams& params = {});

/// ETF when K <= d, approximation otherwise.
GeometricStructure choose_structure(Rng& rng, std::size_t d, std::size_t k,
                                    const ApproximateParams& params = {});

/// User-supplied vertices, normalized to unit length.
GeometricStructure make_explicit(const Matrix& raw_vertices);

/// Four normalized vertices (1,1), (-1,1), (-1,-1), (1,-1) of the 2-D toy.
GeometricStructure toy_square_structure();

struct StructureReport {
  Real max_norm_err = 0.0;
  /// analytic: max |<M_i,M_j> - C|; otherwise: max off-diagonal cosine.
  Real max_offdiag_deviation = 0.0;
};

StructureReport validate(const GeometricStructure& structure);

/// Header `d K kind C`, then K lines of d reals.
void write_structure(std::ostream& out, const GeometricStructure& structure);
GeometricStructure read_structure(std::istream& in);

void save_structure(const std::string& path, const GeometricStructure& structure);
GeometricStructure load_structure(const std::string& path);

}  // namespace gh
