#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "panelbridge/numerics.hpp"
#include "panelbridge/rng.hpp"

using namespace panelbridge;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(rng::Stream& s, int m, int n) {
  MatrixXd a(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = s.next_normal();
  }
  return a;
}

MatrixXd random_rank(rng::Stream& s, int m, int n, int rank) {
  if (rank == 0) return MatrixXd::Zero(m, n);
  return random_matrix(s, m, rank) * random_matrix(s, rank, n);
}

// Independent oracle: the four Penrose conditions.
bool penrose_ok(const MatrixXd& a, const MatrixXd& ap, double tol = 1e-8) {
  const double scale = std::max(1.0, a.norm());
  if (((a * ap * a - a).norm() / scale) > tol) return false;
  if (((ap * a * ap - ap).norm() / std::max(1.0, ap.norm())) > tol) return false;
  MatrixXd aap = a * ap;
  if ((aap - aap.transpose()).norm() / std::max(1.0, aap.norm()) > tol) return false;
  MatrixXd apa = ap * a;
  if ((apa - apa.transpose()).norm() / std::max(1.0, apa.norm()) > tol) return false;
  return true;
}

}  // namespace

TEST_CASE("svd reconstructs input") {
  rng::Stream s(rng::derive_key(7, 1));
  for (int iter = 0; iter < 20; ++iter) {
    const int m = 1 + static_cast<int>(s.next_u64() % 6);
    const int n = 1 + static_cast<int>(s.next_u64() % 6);
    MatrixXd a = random_matrix(s, m, n);
    auto f = numerics::compute_svd(a);
    MatrixXd sigma = MatrixXd::Zero(m, n);
    for (int i = 0; i < std::min(m, n); ++i) sigma(i, i) = f.s(i);
    CHECK((f.u * sigma * f.vt - a).norm() <= 1e-10 * std::max(1.0, a.norm()));
    for (int i = 0; i + 1 < f.s.size(); ++i) CHECK(f.s(i) >= f.s(i + 1));
  }
}

TEST_CASE("pinv identity") {
  MatrixXd eye = MatrixXd::Identity(2, 2);
  CHECK((numerics::pinv(eye) - eye).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("pinv rank-deficient diagonal") {
  MatrixXd a = MatrixXd::Zero(2, 2);
  a(0, 0) = 2.0;
  MatrixXd ap = numerics::pinv(a);
  CHECK(ap(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(ap(1, 1) == 0.0);
  CHECK(ap(0, 1) == 0.0);
}

TEST_CASE("pinv satisfies Penrose conditions on a random low-rank matrix") {
  rng::Stream s(rng::derive_key(7, 2));
  MatrixXd a = random_rank(s, 4, 3, 2);
  CHECK(penrose_ok(a, numerics::pinv(a)));
}

TEST_CASE("pinv Penrose property suite, all shapes up to 8") {
  rng::Stream s(rng::derive_key(7, 3));
  int cases = 0;
  while (cases < 500) {
    const int m = 1 + static_cast<int>(s.next_u64() % 8);
    const int n = 1 + static_cast<int>(s.next_u64() % 8);
    const int rank = static_cast<int>(s.next_u64() % (std::min(m, n) + 1));
    MatrixXd a = random_rank(s, m, n, rank);
    CAPTURE(m);
    CAPTURE(n);
    CAPTURE(rank);
    CHECK(penrose_ok(a, numerics::pinv(a)));
    ++cases;
  }
}

TEST_CASE("pinv rejects non-finite input") {
  MatrixXd a = MatrixXd::Zero(2, 2);
  a(0, 0) = std::nan("");
  CHECK_THROWS_AS((void)numerics::pinv(a), Error);
}

TEST_CASE("ridge_solve simple identity case") {
  MatrixXd k = MatrixXd::Identity(2, 2);
  VectorXd b(2);
  b << 2.0, 4.0;
  VectorXd x = numerics::ridge_solve(k, k, b, 1.0);
  CHECK(x(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(x(1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("ridge_solve approaches the minimal-norm solution") {
  MatrixXd k(1, 2);
  k << 1.0, 1.0;
  MatrixXd w = MatrixXd::Identity(1, 1);
  VectorXd b(1);
  b << 1.0;
  VectorXd x = numerics::ridge_solve(k, w, b, 1e-10);
  CHECK(x(0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(x(1) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("ridge_solve agrees with the pinv route at tiny lambda") {
  rng::Stream s(rng::derive_key(7, 4));
  MatrixXd k = random_matrix(s, 5, 4);
  MatrixXd w = MatrixXd::Identity(5, 5);
  VectorXd b = random_matrix(s, 5, 1);
  VectorXd via_ridge = numerics::ridge_solve(k, w, b, 1e-8);
  VectorXd via_pinv = numerics::pinv(k) * b;
  CHECK((via_ridge - via_pinv).norm() <= 1e-4);
}

TEST_CASE("ridge_solve error paths") {
  MatrixXd k(2, 2);
  k << 1.0, 1.0, 1.0, 1.0;  // rank 1
  MatrixXd w = MatrixXd::Identity(2, 2);
  VectorXd b(2);
  b << 1.0, 1.0;
  CHECK_THROWS_AS((void)numerics::ridge_solve(k, w, b, 0.0), Error);

  MatrixXd bad_w(2, 2);
  bad_w << 1.0, 0.0, 0.0, -1.0;
  try {
    (void)numerics::ridge_solve(k, bad_w, b, 1.0);
    FAIL("expected NonPositiveDefiniteWeight");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonPositiveDefiniteWeight);
  }
}

TEST_CASE("ridge to pinv continuity curve is monotone") {
  rng::Stream s(rng::derive_key(7, 5));
  MatrixXd k = random_rank(s, 3, 4, 2);
  MatrixXd w = MatrixXd::Identity(3, 3);
  VectorXd b = k * random_matrix(s, 4, 1);  // consistent system
  VectorXd target = numerics::pinv(k) * b;
  double prev = std::numeric_limits<double>::infinity();
  for (double lam = 1e-2; lam >= 1e-8 / 2; lam /= 10.0) {
    const double err = (numerics::ridge_solve(k, w, b, lam) - target).norm();
    CHECK(err <= prev * (1.0 + 1e-9));
    prev = err;
  }
  CHECK(prev <= 1e-6);
}

TEST_CASE("rank estimates") {
  CHECK(numerics::rank_estimate(MatrixXd::Identity(3, 3)) == 3);
  VectorXd u(3), v(4);
  u << 1.0, -2.0, 0.5;
  v << 0.3, 1.0, 2.0, -1.0;
  CHECK(numerics::rank_estimate(u * v.transpose()) == 1);
  MatrixXd near(2, 2);
  near << 1.0, 1.0, 1.0, 1.0 + 1e-15;
  CHECK(numerics::rank_estimate(near) == 1);
}

TEST_CASE("normal quantile values") {
  CHECK(numerics::normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(numerics::normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK(numerics::normal_quantile(0.025) ==
        doctest::Approx(-numerics::normal_quantile(0.975)).epsilon(1e-9));
  CHECK_THROWS_AS((void)numerics::normal_quantile(0.0), Error);
  CHECK_THROWS_AS((void)numerics::normal_quantile(1.0), Error);
}

TEST_CASE("normal quantile inverts the CDF to 1e-7 on a grid") {
  for (double x = -5.0; x <= 5.0 + 1e-9; x += 0.25) {
    const double p = numerics::normal_cdf(x);
    CHECK(std::abs(numerics::normal_quantile(p) - x) <= 1e-7);
  }
}
