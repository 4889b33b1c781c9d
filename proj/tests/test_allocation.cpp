#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gh/allocation.hpp"
#include "gh/error.hpp"
#include "gh/geometry.hpp"
#include "support/sinkhorn_oracle.hpp"

using namespace gh;

namespace {

Matrix random_predictions(Rng& rng, std::size_t k, std::size_t n, Real sharpness) {
  Matrix q(k, n);
  Vector logits(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : logits) x = rng.normal() * sharpness;
    q.set_col(i, softmax(logits));
  }
  return q;
}

ClassPrior random_prior(Rng& rng, std::size_t k) {
  ClassPrior p{Vector(k), 0.0};
  Real total = 0.0;
  for (auto& x : p.pi) total += x = 0.05 + rng.uniform();
  for (auto& x : p.pi) x /= total;
  return p;
}

std::vector<std::vector<double>> rows_of(const Matrix& m) {
  std::vector<std::vector<double>> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r].assign(m.row(r).begin(), m.row(r).end());
  return out;
}

Real column_entropy(const Matrix& q, std::size_t i) {
  Real total = 0.0, h = 0.0;
  for (std::size_t r = 0; r < q.rows(); ++r) total += q(r, i);
  for (std::size_t r = 0; r < q.rows(); ++r) {
    const Real p = q(r, i) / total;
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace

TEST_SUITE("allocation") {
  TEST_CASE("geometric predictions") {
    Rng rng(1);
    const GeometricStructure pair = build_etf(rng, 2, 2);
    const GeometricPredictions g = geometric_predict(Matrix(2, 1, pair.vertex(0)), pair, 0.1);
    const Real tail = 1.0 / (1.0 + std::exp(20.0));  // softmax([10, -10])
    CHECK(std::abs(g.q(0, 0) - (1.0 - tail)) < 1e-15);
    CHECK(std::abs(g.q(1, 0) - tail) < 1e-18);

    // A direction orthogonal to the plane of a 3-vertex ETF in R^3 is equidistant from all vertices.
    const GeometricStructure tri = build_etf(rng, 3, 3);
    const Vector a = tri.vertex(0), b = tri.vertex(1);
    Vector f{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
    const Real nf = norm2(f);
    for (auto& x : f) x /= nf;
    const GeometricPredictions eq = geometric_predict(Matrix(3, 1, f), tri, 0.1);
    for (int r = 0; r < 3; ++r) CHECK(std::abs(eq.q(r, 0) - 1.0 / 3.0) < 1e-12);

    const GeometricPredictions hot = geometric_predict(Matrix(2, 1, pair.vertex(1)), pair, 1e12);
    CHECK(std::abs(hot.q(0, 0) - 0.5) < 1e-10);

    CHECK_THROWS_AS(geometric_predict(Matrix(2, 1, {2.0, 0.0}), pair, 0.1), Error);
    CHECK_THROWS_AS(geometric_predict(Matrix(3, 1, {1.0, 0.0, 0.0}), pair, 0.1), Error);
  }

  TEST_CASE("prediction columns are distributions") {
    Rng rng(2);
    const GeometricStructure s = build_approximate(rng, 3, 7);
    Matrix f(3, 50);
    for (std::size_t i = 0; i < 50; ++i) {
      Vector v{rng.normal(), rng.normal(), rng.normal()};
      const Real nv = norm2(v);
      for (auto& x : v) x /= nv;
      f.set_col(i, v);
    }
    const GeometricPredictions g = geometric_predict(f, s, 0.1);
    for (std::size_t i = 0; i < 50; ++i) {
      Real total = 0.0;
      for (std::size_t r = 0; r < 7; ++r) {
        CHECK(g.q(r, i) >= 0.0);
        total += g.q(r, i);
      }
      CHECK(std::abs(total - 1.0) < 1e-10);
    }
  }

  TEST_CASE("momentum tracking") {
    MomentumTracker t(0.999);
    CHECK(t.empty());
    t.update(GeometricPredictions{Matrix(2, 1, {1.0, 0.0}), 0.1});
    CHECK(t.q_m()(0, 0) == 1.0);  // first update adopts the fresh predictions
    MomentumTracker zero(0.999);
    zero.update(GeometricPredictions{Matrix(2, 1, {0.0, 1.0}), 0.1});
    zero.update(GeometricPredictions{Matrix(2, 1, {1.0, 0.0}), 0.1});
    CHECK(std::abs(zero.q_m()(0, 0) - 0.001) < 1e-15);

    MomentumTracker none(0.0);
    none.update(GeometricPredictions{Matrix(2, 1, {0.3, 0.7}), 0.1});
    none = momentum_update(none, GeometricPredictions{Matrix(2, 1, {0.9, 0.1}), 0.1});
    CHECK(none.q_m() == Matrix(2, 1, {0.9, 0.1}));

    MomentumTracker half(0.5);
    half.update(GeometricPredictions{Matrix(2, 1, {1.0, 0.0}), 0.1});
    half.update(GeometricPredictions{Matrix(2, 1, {0.0, 1.0}), 0.1});
    CHECK(half.q_m() == Matrix(2, 1, {0.5, 0.5}));
    CHECK_THROWS_AS(half.update(GeometricPredictions{Matrix(2, 2, 0.5), 0.1}), Error);

    MomentumTracker frozen(1.0);
    frozen.update(GeometricPredictions{Matrix(2, 1, {0.2, 0.8}), 0.1});
    frozen.update(GeometricPredictions{Matrix(2, 1, {1.0, 0.0}), 0.1});
    CHECK(frozen.q_m() == Matrix(2, 1, {0.2, 0.8}));
    CHECK_THROWS_AS(MomentumTracker(1.5), Error);
  }

  TEST_CASE("prior estimation") {
    Matrix onehot(4, 10, 0.0);
    for (std::size_t i = 0; i < 10; ++i) onehot(0, i) = 1.0;
    const ClassPrior p = estimate_prior(onehot, 1e-4);
    CHECK(std::abs(p.pi[0] - 0.9997) < 1e-15);
    for (int r = 1; r < 4; ++r) CHECK(p.pi[r] == 1e-4);

    const ClassPrior u = estimate_prior(Matrix(4, 6, 0.25), 1e-4);
    for (Real x : u.pi) CHECK(std::abs(x - 0.25) < 1e-15);

    Matrix split(4, 5, 0.0);
    for (std::size_t i = 0; i < 5; ++i) {
      split(0, i) = i < 3 ? 1.0 : 0.0;
      split(1, i) = i < 3 ? 0.0 : 1.0;
    }
    const ClassPrior s = estimate_prior(split, 1e-4);
    CHECK(std::abs(s.pi[0] - 0.6 * (1 - 2e-4)) < 1e-15);
    CHECK(std::abs(s.pi[1] - 0.4 * (1 - 2e-4)) < 1e-15);
    CHECK(s.pi[2] == 1e-4);

    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
      const Matrix q = random_predictions(rng, 6, 40, 8.0);
      const Real floor = default_prior_floor(6) * (1 + t);
      const ClassPrior e = estimate_prior(q, floor);
      Real total = 0.0;
      for (Real x : e.pi) {
        CHECK(x >= floor);
        total += x;
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(estimate_prior(onehot, 0.3), Error);
  }

  TEST_CASE("sinkhorn on a uniform instance stops at the first sweep") {
    const AssignmentResult r = sinkhorn_allocate(Matrix(4, 9, 0.25), uniform_prior(4));
    CHECK(r.converged);
    CHECK(r.iterations_used == 1);
    for (Real x : r.q_hat.data()) CHECK(std::abs(x - 0.25) < 1e-14);
  }

  TEST_CASE("sinkhorn small instances") {
    const Matrix diag(2, 2, {0.9, 0.1, 0.1, 0.9});
    const AssignmentResult r = sinkhorn_allocate(diag, uniform_prior(2));
    CHECK(r.converged);
    CHECK(std::abs(r.q_hat(0, 0) - 1.0) < 1e-3);
    CHECK(std::abs(r.q_hat(1, 1) - 1.0) < 1e-3);
    CHECK(hard_labels(r.q_hat) == std::vector<int>{0, 1});
    const oracle::Plan ref = oracle::sinkhorn(rows_of(diag), {0.5, 0.5}, 20.0);
    REQUIRE(ref.converged);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) CHECK(std::abs(r.q_hat(a, b) - ref.q_hat[a][b]) < 1e-6);

    Matrix same(2, 4);
    for (std::size_t i = 0; i < 4; ++i) same.set_col(i, Vector{0.9, 0.1});
    const AssignmentResult even = sinkhorn_allocate(same, uniform_prior(2));
    CHECK(even.converged);
    for (Real x : even.q_hat.data()) CHECK(std::abs(x - 0.5) < 1e-9);
  }

  TEST_CASE("sinkhorn marginals on random instances") {
    Rng rng(4);
    int converged = 0;
    for (int t = 0; t < 60; ++t) {
      const std::size_t k = 2 + rng.below(15), n = 2 + rng.below(200);
      const Matrix q = random_predictions(rng, k, n, rng.uniform(0.1, 1.0));
      const ClassPrior prior = random_prior(rng, k);
      const AssignmentResult r = sinkhorn_allocate(q, prior);
      for (Real x : r.q_hat.data()) CHECK(x >= 0.0);
      // rows are refreshed last, so they hold at any stopping point
      for (std::size_t a = 0; a < k; ++a) {
        Real s = 0.0;
        for (Real x : r.q_hat.row(a)) s += x;
        CHECK(std::abs(s - n * prior.pi[a]) < n * 1e-9);
      }
      if (!r.converged) continue;
      ++converged;
      for (std::size_t i = 0; i < n; ++i) {
        Real s = 0.0;
        for (std::size_t a = 0; a < k; ++a) s += r.q_hat(a, i);
        CHECK(std::abs(s - 1.0) < 1e-4);
      }
    }
    CHECK(converged > 40);
  }

  TEST_CASE("sinkhorn agrees with the extended-precision oracle") {
    Rng rng(5);
    for (int t = 0; t < 40; ++t) {
      const std::size_t k = 2 + rng.below(2), n = 1 + rng.below(6);
      const Matrix q = random_predictions(rng, k, n, 1.0);
      const ClassPrior prior = random_prior(rng, k);
      const AssignmentResult r = sinkhorn_allocate(q, prior);
      const oracle::Plan ref = oracle::sinkhorn(rows_of(q), prior.pi, 20.0);
      REQUIRE(ref.converged);
      if (!r.converged) continue;
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(r.q_hat(a, i) - ref.q_hat[a][i]) < 1e-6);
    }
  }

  TEST_CASE("sinkhorn is invariant to a common column scale") {
    Rng rng(6);
    const Matrix q = random_predictions(rng, 5, 30, 1.0);
    Matrix scaled = q;
    scaled *= 0.37;
    const ClassPrior prior = random_prior(rng, 5);
    const AssignmentResult a = sinkhorn_allocate(q, prior);
    const AssignmentResult b = sinkhorn_allocate(scaled, prior);
    CHECK(max_abs_diff(a.q_hat, b.q_hat) < 1e-10);
  }

  TEST_CASE("larger lambda sharpens the plan") {
    Rng rng(7);
    // well separated: each column strongly prefers one row
    Matrix q(3, 12);
    for (std::size_t i = 0; i < 12; ++i) {
      Vector col(3, 0.1);
      col[i % 3] = 0.8;
      col[(i + 1) % 3] += 0.02 * rng.uniform();
      Real total = 0.0;
      for (Real x : col) total += x;
      for (auto& x : col) x /= total;
      q.set_col(i, col);
    }
    const ClassPrior prior = uniform_prior(3);
    Vector prev(12, 1e9);
    for (Real lambda : {20.0, 50.0, 100.0, 200.0}) {
      const AssignmentResult r = sinkhorn_allocate(q, prior, SinkhornConfig{lambda, 300, 1e-6});
      for (std::size_t i = 0; i < 12; ++i) {
        const Real h = column_entropy(r.q_hat, i);
        CHECK(h <= prev[i] + 1e-8);
        prev[i] = h;
      }
    }
  }

  TEST_CASE("sinkhorn is deterministic") {
    Rng rng(8);
    const Matrix q = random_predictions(rng, 6, 100, 2.0);
    const ClassPrior prior = random_prior(rng, 6);
    CHECK(sinkhorn_allocate(q, prior).q_hat == sinkhorn_allocate(q, prior).q_hat);
  }

  TEST_CASE("sinkhorn rejects infeasible input") {
    const Matrix q(2, 3, 0.5);
    auto code_of = [](auto&& fn) {
      try {
        fn();
      } catch (const Error& e) {
        return e.code();
      }
      return Errc::io;  // sentinel: nothing thrown
    };
    CHECK(code_of([&] { sinkhorn_allocate(q, ClassPrior{{1.0, 0.0}, 0.0}); }) == Errc::degenerate_input);
    CHECK(code_of([&] { sinkhorn_allocate(q, ClassPrior{{0.7, 0.7}, 0.0}); }) == Errc::degenerate_input);
    Matrix dead = q;
    dead(0, 1) = 0.0;
    dead(1, 1) = 0.0;
    CHECK(code_of([&] { sinkhorn_allocate(dead, uniform_prior(2)); }) == Errc::degenerate_input);
    Matrix empty_row(2, 3, 0.0);
    for (std::size_t i = 0; i < 3; ++i) empty_row(0, i) = 1.0;
    CHECK(code_of([&] { sinkhorn_allocate(empty_row, uniform_prior(2)); }) == Errc::degenerate_input);
    Matrix nan = q;
    nan(0, 0) = std::nan("");
    CHECK(code_of([&] { sinkhorn_allocate(nan, uniform_prior(2)); }) == Errc::invalid_argument);
    CHECK(code_of([&] { sinkhorn_allocate(q, uniform_prior(3)); }) == Errc::invalid_argument);
  }

  TEST_CASE("convergence criterion") {
    const Vector u{1.0, 2.0, 3.0};
    CHECK(convergence_criterion(u, u) == 0.0);
    CHECK(convergence_criterion(Vector{2.0, 4.0, 6.0}, u) == doctest::Approx(3.0));
    Rng rng(9);
    const Matrix q = random_predictions(rng, 4, 64, 1.0);
    const AssignmentResult r = sinkhorn_allocate(q, random_prior(rng, 4), SinkhornConfig{20.0, 20000, 1e-6});
    REQUIRE(r.converged);
    CHECK(r.criterion_trace.size() == r.iterations_used);
    CHECK(r.criterion_trace.back() == r.final_criterion);
    CHECK(r.final_criterion < 1e-6);
    // overall decay: the tail of the trace sits far below its head
    CHECK(r.criterion_trace.back() < 1e-3 * r.criterion_trace.front());
  }

  TEST_CASE("hard labels and CSV dump") {
    CHECK(hard_labels(Matrix(3, 1, {0.7, 0.2, 0.1})) == std::vector<int>{0});
    CHECK(hard_labels(Matrix(2, 1, {0.5, 0.5})) == std::vector<int>{0});
    CHECK(hard_labels(Matrix(2, 2, {0.1, 0.6, 0.9, 0.4})) == std::vector<int>{1, 0});
    AssignmentResult r;
    r.q_hat = Matrix(2, 1, {0.25, 0.75});
    std::ostringstream out;
    write_assignment_csv(out, r);
    CHECK(out.str() == "sample_index,argmax_label,q_hat_0,q_hat_1\n0,1,0.25,0.75\n");
  }
}
