#include "gh/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "gh/error.hpp"
#include "gh/text_format.hpp"

namespace gh {

std::string to_string(StructureKind kind) {
  switch (kind) {
    case StructureKind::analytic_etf:
      return "analytic_etf";
    case StructureKind::approximate:
      return "approximate";
    case StructureKind::explicit_vertices:
      return "explicit";
  }
  return "unknown";
}

StructureKind parse_structure_kind(const std::string& text) {
  if (text == "analytic_etf") return StructureKind::analytic_etf;
  if (text == "approximate") return StructureKind::approximate;
  if (text == "explicit") return StructureKind::explicit_vertices;
  throw Error(Errc::io, "unknown structure kind '" + text + "'");
}

GeometricStructure::GeometricStructure(Matrix vertices, Real target_cosine, StructureKind kind)
    : vertices_(std::move(vertices)), target_cosine_(target_cosine), kind_(kind) {
  if (vertices_.cols() < 2) throw Error(Errc::invalid_argument, "structure needs at least 2 vertices");
  if (!all_finite(vertices_.data())) throw Error(Errc::invalid_argument, "structure has non-finite vertices");
}

namespace {

Real max_offdiag_cosine(const Matrix& m) {
  Real worst = -std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < m.cols(); ++i) {
    const Real ni = column_norm(m, i);
    for (std::size_t j = i + 1; j < m.cols(); ++j) {
      Real s = 0.0;
      for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, i) * m(r, j);
      worst = std::max(worst, s / (ni * column_norm(m, j)));
    }
  }
  return worst;
}

void normalize_columns(Matrix& m) {
  for (std::size_t c = 0; c < m.cols(); ++c) {
    const Real n = column_norm(m, c);
    if (!(n > 0.0)) throw Error(Errc::invalid_argument, "zero-length vertex " + std::to_string(c));
    for (std::size_t r = 0; r < m.rows(); ++r) m(r, c) /= n;
  }
}

}  // namespace

GeometricStructure build_etf(Rng& rng, std::size_t d, std::size_t k) {
  if (k < 2) throw Error(Errc::invalid_argument, "build_etf: need K >= 2");
  if (d < k) {
    throw Error(Errc::dimension, "build_etf: a simplex ETF needs d >= K (d=" + std::to_string(d) +
                                     ", K=" + std::to_string(k) + "); use build_approximate");
  }
  const Matrix u = qr_orthonormal(rng, d, k);
  const Real kk = static_cast<Real>(k);
  Matrix centering = Matrix::identity(k);
  for (auto& x : centering.data()) x -= 1.0 / kk;
  Matrix m = u * centering;
  m *= std::sqrt(kk / (kk - 1.0));
  // Columns are unit up to rounding; renormalizing keeps the norm invariant tight.
  normalize_columns(m);
  return GeometricStructure(std::move(m), -1.0 / (kk - 1.0), StructureKind::analytic_etf);
}

GeometricStructure build_approximate(Rng& rng, std::size_t d, std::size_t k,
                                     const ApproximateParams& params) {
  if (k < 2 || d < 2) throw Error(Errc::invalid_argument, "build_approximate: need K >= 2 and d >= 2");
  if (!(params.tau_u > 0.0) || !(params.lr > 0.0) || params.steps == 0) {
    throw Error(Errc::invalid_argument, "build_approximate: tau_u, lr and steps must be positive");
  }
  Matrix m(d, k);
  for (auto& x : m.data()) x = rng.normal();
  normalize_columns(m);

  const Real inv_tau = 1.0 / params.tau_u;
  Matrix gram(k, k);
  Matrix grad(d, k);
  auto compute_loss = [&](const Matrix& cur) {
    Vector logits(k * k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        Real s = 0.0;
        for (std::size_t r = 0; r < d; ++r) s += cur(r, i) * cur(r, j);
        gram(i, j) = s;
        // Diagonal terms are constant on the sphere; keeping them only damps the gradient by ~exp(-1/tau).
        logits[i * k + j] = i == j ? -std::numeric_limits<Real>::infinity() : s * inv_tau;
      }
    return log_sum_exp(logits);
  };

  Real prev_loss = compute_loss(m);
  Real best_loss = prev_loss;
  std::size_t rising = 0;
  std::ostringstream trace;
  for (std::size_t step = 0; step < params.steps; ++step) {
    const Real progress = static_cast<Real>(step) / static_cast<Real>(params.steps);
    const Real lr = params.lr_min + 0.5 * (params.lr - params.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));

    // dL/dM_i = (2/tau) sum_{j != i} w_ij M_j with w the softmax over off-diagonal pairs.
    Vector w(k * k, 0.0);
    {
      Real top = -std::numeric_limits<Real>::infinity();
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          if (i != j) top = std::max(top, gram(i, j) * inv_tau);
      Real total = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          if (i != j) total += w[i * k + j] = std::exp(gram(i, j) * inv_tau - top);
      for (auto& x : w) x /= total;
    }
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t r = 0; r < d; ++r) {
        Real g = 0.0;
        for (std::size_t j = 0; j < k; ++j) g += w[i * k + j] * m(r, j);
        grad(r, i) = 2.0 * inv_tau * g;
      }
      // Tangent component only; the radial part is undone by re-projection anyway.
      Real radial = 0.0;
      for (std::size_t r = 0; r < d; ++r) radial += grad(r, i) * m(r, i);
      for (std::size_t r = 0; r < d; ++r) grad(r, i) -= radial * m(r, i);
    }
    for (std::size_t i = 0; i < m.data().size(); ++i) m.data()[i] -= lr * grad.data()[i];

    // Soft version of sum_i M_i = 0, then back onto the sphere.
    for (std::size_t r = 0; r < d; ++r) {
      auto row = m.row(r);
      Real mean = 0.0;
      for (Real x : row) mean += x;
      mean /= static_cast<Real>(k);
      for (auto& x : row) x -= mean;
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (column_norm(m, c) < 1e-12) {
        for (std::size_t r = 0; r < d; ++r) m(r, c) = rng.normal();
      }
    }
    normalize_columns(m);

    const Real loss = compute_loss(m);
    if (!std::isfinite(loss)) {
      throw Error(Errc::optimization_failure, "build_approximate: non-finite loss at step " + std::to_string(step));
    }
    trace << step << ':' << loss << ' ';
    // Centering can pull the vertices slightly off the unconstrained minimum,
    // so a slow creep near the optimum is not counted as divergence.
    best_loss = std::min(best_loss, loss);
    rising = loss > prev_loss && loss > best_loss + 1e-2 * std::abs(best_loss) ? rising + 1 : 0;
    if (rising >= 50) {
      throw Error(Errc::optimization_failure,
                  "build_approximate: loss increased for 50 consecutive steps; trace " + trace.str());
    }
    if (step % 64 == 63) trace.str("");
    prev_loss = loss;
  }
  const Real achieved = max_offdiag_cosine(m);
  return GeometricStructure(std::move(m), achieved, StructureKind::approximate);
}

GeometricStructure choose_structure(Rng& rng, std::size_t d, std::size_t k, const ApproximateParams& params) {
  if (k < 2) throw Error(Errc::invalid_argument, "choose_structure: need K >= 2");
  if (k <= d) return build_etf(rng, d, k);
  return build_approximate(rng, d, k, params);
}

GeometricStructure make_explicit(const Matrix& raw_vertices) {
  Matrix m = raw_vertices;
  normalize_columns(m);
  const Real c = max_offdiag_cosine(m);
  return GeometricStructure(std::move(m), c, StructureKind::explicit_vertices);
}

GeometricStructure toy_square_structure() {
  // columns (1,1), (-1,1), (-1,-1), (1,-1)
  Matrix raw(2, 4, {1.0, -1.0, -1.0, 1.0,  //
                    1.0, 1.0, -1.0, -1.0});
  return make_explicit(raw);
}

StructureReport validate(const GeometricStructure& structure) {
  const Matrix& m = structure.vertices();
  StructureReport report;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    report.max_norm_err = std::max(report.max_norm_err, std::abs(column_norm(m, c) - 1.0));
  }
  if (structure.kind() == StructureKind::analytic_etf) {
    for (std::size_t i = 0; i < m.cols(); ++i)
      for (std::size_t j = i + 1; j < m.cols(); ++j) {
        Real s = 0.0;
        for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, i) * m(r, j);
        report.max_offdiag_deviation =
            std::max(report.max_offdiag_deviation, std::abs(s - structure.target_cosine()));
      }
  } else {
    report.max_offdiag_deviation = max_offdiag_cosine(m);
  }
  return report;
}

void write_structure(std::ostream& out, const GeometricStructure& structure) {
  const Matrix& m = structure.vertices();
  out << m.rows() << ' ' << m.cols() << ' ' << to_string(structure.kind()) << ' '
      << format_real(structure.target_cosine()) << '\n';
  for (std::size_t c = 0; c < m.cols(); ++c) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      if (r) out << ' ';
      out << format_real(m(r, c));
    }
    out << '\n';
  }
}

GeometricStructure read_structure(std::istream& in) {
  std::size_t d = 0, k = 0;
  std::string kind_text, c_text;
  if (!(in >> d >> k >> kind_text >> c_text)) throw Error(Errc::io, "structure: malformed header");
  const StructureKind kind = parse_structure_kind(kind_text);
  const Real c = parse_real(c_text);
  Matrix m(d, k);
  for (std::size_t col = 0; col < k; ++col)
    for (std::size_t r = 0; r < d; ++r) {
      std::string tok;
      if (!(in >> tok)) throw Error(Errc::io, "structure: truncated vertex data");
      m(r, col) = parse_real(tok);
    }
  return GeometricStructure(std::move(m), c, kind);
}

void save_structure(const std::string& path, const GeometricStructure& structure) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot write " + path);
  write_structure(out, structure);
}

GeometricStructure load_structure(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot read " + path);
  return read_structure(in);
}

}  // namespace gh
