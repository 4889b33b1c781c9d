#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gh/error.hpp"
#include "gh/geometry.hpp"

using namespace gh;

namespace {

Real max_offdiag(const Matrix& m) {
  const Matrix g = m.transpose() * m;
  Real worst = -2.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      if (i != j) worst = std::max(worst, g(i, j));
  return worst;
}

Real min_offdiag(const Matrix& m) {
  const Matrix g = m.transpose() * m;
  Real best = 2.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      if (i != j) best = std::min(best, g(i, j));
  return best;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("simplex ETF gram matrix") {
    for (auto [d, k] : {std::pair{2, 2}, std::pair{3, 3}, std::pair{8, 4}, std::pair{5, 5}, std::pair{128, 100}}) {
      Rng rng(static_cast<std::uint64_t>(d * 1000 + k));
      const GeometricStructure s = build_etf(rng, d, k);
      CHECK(s.kind() == StructureKind::analytic_etf);
      const Real c = -1.0 / (k - 1.0);
      CHECK(s.target_cosine() == doctest::Approx(c).epsilon(1e-14));
      const Matrix g = s.vertices().transpose() * s.vertices();
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) CHECK(std::abs(g(i, j) - (i == j ? 1.0 : c)) < 1e-8);
      const StructureReport rep = validate(s);
      CHECK(rep.max_norm_err < 1e-10);
      CHECK(rep.max_offdiag_deviation < 1e-8);
      // the columns sum to zero, so M has rank K-1
      for (int r = 0; r < d; ++r) {
        Real total = 0.0;
        for (int j = 0; j < k; ++j) total += s.vertices()(r, j);
        CHECK(std::abs(total) < 1e-10);
      }
    }
  }

  TEST_CASE("ETF K=2 is an antipodal pair") {
    Rng rng(1);
    const GeometricStructure s = build_etf(rng, 2, 2);
    const Vector a = s.vertex(0), b = s.vertex(1);
    CHECK(std::abs(a[0] + b[0]) < 1e-12);
    CHECK(std::abs(a[1] + b[1]) < 1e-12);
  }

  TEST_CASE("ETF gram is rotation invariant") {
    Rng r1(3), r2(99);
    const Matrix g1 = build_etf(r1, 6, 4).vertices();
    const Matrix g2 = build_etf(r2, 6, 4).vertices();
    CHECK(max_abs_diff(g1.transpose() * g1, g2.transpose() * g2) < 1e-10);
  }

  TEST_CASE("ETF needs d >= K") {
    Rng rng(1);
    try {
      build_etf(rng, 2, 4);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::dimension);
      CHECK(std::string(e.what()).find("build_approximate") != std::string::npos);
    }
  }

  TEST_CASE("approximate structures") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(seed);
      const GeometricStructure tetra = build_approximate(rng, 3, 4);
      CHECK(tetra.kind() == StructureKind::approximate);
      CHECK(std::abs(max_offdiag(tetra.vertices()) + 1.0 / 3.0) < 1e-3);
      CHECK(std::abs(min_offdiag(tetra.vertices()) + 1.0 / 3.0) < 1e-3);
      CHECK(validate(tetra).max_norm_err < 1e-10);

      const GeometricStructure cross = build_approximate(rng, 2, 4);
      CHECK(max_offdiag(cross.vertices()) < 0.02);
      CHECK(tetra.target_cosine() == doctest::Approx(max_offdiag(tetra.vertices())));

      const GeometricStructure pair = build_approximate(rng, 2, 2);
      CHECK(std::abs(max_offdiag(pair.vertices()) + 1.0) < 1e-6);
    }
    // K <= d+1 reaches the simplex bound
    Rng rng(12);
    const GeometricStructure five = build_approximate(rng, 4, 5);
    CHECK(std::abs(max_offdiag(five.vertices()) + 0.25) < 1e-2);
  }

  TEST_CASE("approximate rejects bad parameters") {
    Rng rng(1);
    CHECK_THROWS_AS(build_approximate(rng, 2, 1), Error);
    CHECK_THROWS_AS(build_approximate(rng, 2, 4, ApproximateParams{0.0, 10, 0.1, 1e-3}), Error);
  }

  TEST_CASE("dispatch by dimension") {
    Rng rng(4);
    CHECK(choose_structure(rng, 128, 100).kind() == StructureKind::analytic_etf);
    CHECK(choose_structure(rng, 2, 4).kind() == StructureKind::approximate);
    CHECK(choose_structure(rng, 5, 5).kind() == StructureKind::analytic_etf);
  }

  TEST_CASE("toy square and explicit vertices") {
    const GeometricStructure s = toy_square_structure();
    CHECK(s.kind() == StructureKind::explicit_vertices);
    const Real h = std::sqrt(0.5);
    const Matrix expected(2, 4, {h, -h, -h, h, h, h, -h, -h});
    CHECK(max_abs_diff(s.vertices(), expected) < 1e-15);
    CHECK(std::abs(s.target_cosine()) < 1e-15);

    const GeometricStructure e = make_explicit(Matrix(2, 2, {3, 0, 4, 2}));
    CHECK(validate(e).max_norm_err < 1e-15);
  }

  TEST_CASE("validate reports a stretched column") {
    Rng rng(1);
    Matrix m = build_etf(rng, 2, 2).vertices();
    m(0, 1) *= 2.0;
    m(1, 1) *= 2.0;
    const GeometricStructure bad(m, -1.0, StructureKind::analytic_etf);
    CHECK(validate(bad).max_norm_err == doctest::Approx(1.0).epsilon(1e-12));

    Rng r3(5);
    CHECK(validate(build_etf(r3, 3, 3)).max_offdiag_deviation < 1e-8);
  }

  TEST_CASE("structure file round trip") {
    Rng rng(6);
    const GeometricStructure s = build_approximate(rng, 3, 7);
    std::stringstream io;
    write_structure(io, s);
    const GeometricStructure back = read_structure(io);
    CHECK(back.vertices() == s.vertices());
    CHECK(back.target_cosine() == s.target_cosine());
    CHECK(back.kind() == s.kind());

    std::stringstream bad("2 2 analytic_etf -1\n1 0\n");
    CHECK_THROWS_AS(read_structure(bad), Error);
    CHECK(parse_structure_kind(to_string(StructureKind::explicit_vertices)) == StructureKind::explicit_vertices);
  }
}
