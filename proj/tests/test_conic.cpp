#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "iccs/conic.hpp"

using namespace iccs;

TEST_CASE("active bound LP") {
  ProblemBuilder b;
  const int x = b.add_var();
  b.minimize(LinExpr::var(x));
  b.nonneg(LinExpr::var(x) - 3.0);  // x >= 3
  const auto sol = solve(b.build());
  REQUIRE(sol.ok());
  CHECK(sol.x(x) == doctest::Approx(3.0).epsilon(1e-7));
  CHECK(sol.objective == doctest::Approx(3.0).epsilon(1e-7));
}

TEST_CASE("fixed-vector norm SOC") {
  ProblemBuilder b;
  const int t = b.add_var();
  b.minimize(LinExpr::var(t));
  b.soc({LinExpr::var(t), LinExpr(1.0), LinExpr(1.0)});  // t >= ||(1,1)||
  const auto sol = solve(b.build());
  REQUIRE(sol.ok());
  CHECK(sol.x(t) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-7));
}

TEST_CASE("hyperbolic corner") {
  // min t s.t. t*f >= 4, 0 <= f <= 2  ->  t = 2 at f = 2
  ProblemBuilder b;
  const int t = b.add_var();
  const int f = b.add_var();
  b.minimize(LinExpr::var(t));
  b.rsoc(LinExpr::var(t), LinExpr::var(f), {LinExpr(2.0)});
  b.nonneg(LinExpr(2.0) - LinExpr::var(f));
  const auto sol = solve(b.build());
  REQUIRE(sol.ok());
  CHECK(sol.x(t) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(sol.x(f) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("hyperbolic encoder feasibility ranges") {
  // u = v = 1 fixed: feasible iff |w| <= 1; maximize w.
  {
    ProblemBuilder b;
    const int w = b.add_var();
    b.minimize(-1.0 * LinExpr::var(w));
    encode_hyperbolic(b, LinExpr(1.0), LinExpr(1.0), LinExpr::var(w));
    const auto sol = solve(b.build());
    REQUIRE(sol.ok());
    CHECK(sol.x(w) == doctest::Approx(1.0).epsilon(1e-6));
  }
  // u = 4, v = 1: |w| <= 2 (check the negative side too)
  {
    ProblemBuilder b;
    const int w = b.add_var();
    b.minimize(LinExpr::var(w));
    encode_hyperbolic(b, LinExpr(4.0), LinExpr(1.0), LinExpr::var(w));
    const auto sol = solve(b.build());
    REQUIRE(sol.ok());
    CHECK(sol.x(w) == doctest::Approx(-2.0).epsilon(1e-6));
  }
  // w = 0 feasible for any u, v >= 0
  {
    ProblemBuilder b;
    const int u = b.add_var();
    b.minimize(LinExpr::var(u));
    encode_hyperbolic(b, LinExpr::var(u), LinExpr(0.0), LinExpr(0.0));
    const auto sol = solve(b.build());
    REQUIRE(sol.ok());
    CHECK(sol.x(u) == doctest::Approx(0.0).epsilon(1e-6));
  }
}

TEST_CASE("cube encoder tightness") {
  for (double f : {0.5, 1.0, 2.0, 5.0}) {
    ProblemBuilder b;
    const int s = b.add_var();
    b.minimize(LinExpr::var(s));
    encode_cube_bound(b, LinExpr(f), LinExpr::var(s));
    const auto sol = solve(b.build());
    REQUIRE(sol.ok());
    CHECK(sol.x(s) == doctest::Approx(f * f * f).epsilon(1e-6));
  }
  // f = 0 admits s = 0
  ProblemBuilder b;
  const int s = b.add_var();
  b.minimize(LinExpr::var(s));
  encode_cube_bound(b, LinExpr(0.0), LinExpr::var(s));
  const auto sol = solve(b.build());
  REQUIRE(sol.ok());
  CHECK(sol.x(s) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("infeasible and unbounded detection") {
  {
    ProblemBuilder b;
    const int x = b.add_var();
    b.minimize(LinExpr::var(x));
    b.nonneg(LinExpr::var(x) - 3.0);   // x >= 3
    b.nonneg(2.0 - LinExpr::var(x));   // x <= 2
    CHECK(solve(b.build()).status == SolveStatus::infeasible);
  }
  {
    ProblemBuilder b;
    const int x = b.add_var();
    b.minimize(LinExpr::var(x));
    b.nonneg(-LinExpr::var(x));  // x <= 0, objective unbounded below
    CHECK(solve(b.build()).status == SolveStatus::unbounded);
  }
}

TEST_CASE("self-duality at optimum") {
  // dual objective reconstructed from multipliers matches primal objective
  ProblemBuilder b;
  const int x = b.add_var();
  const int y = b.add_var();
  b.minimize(2.0 * LinExpr::var(x) + LinExpr::var(y));
  b.nonneg(LinExpr::var(x) + LinExpr::var(y) - 1.0);
  b.nonneg(LinExpr::var(x));
  b.nonneg(LinExpr::var(y));
  const auto sol = solve(b.build());
  REQUIRE(sol.ok());
  CHECK(sol.gap <= 1e-8);
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-7));
}

namespace {

struct RandomLp {
  // min c0 x + c1 y over [0,1]^2 with extra halfplanes a x + b y <= d
  double c0, c1;
  std::vector<std::array<double, 3>> cuts;

  double grid_best() const {
    double best = 1e300;
    for (int i = 0; i <= 1000; ++i)
      for (int j = 0; j <= 1000; ++j) {
        const double x = i * 1e-3, y = j * 1e-3;
        bool ok = true;
        for (const auto& cc : cuts)
          if (cc[0] * x + cc[1] * y > cc[2]) ok = false;
        if (ok) best = std::min(best, c0 * x + c1 * y);
      }
    return best;
  }
};

}  // namespace

TEST_CASE("random two-variable problems vs grid search") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 25; ++trial) {
    RandomLp lp;
    lp.c0 = u(rng);
    lp.c1 = u(rng);
    lp.cuts.push_back({std::abs(u(rng)) + 0.1, std::abs(u(rng)) + 0.1,
                       std::abs(u(rng)) + 0.2});
    const double ref = lp.grid_best();
    if (ref > 1e299) continue;  // infeasible grid (cannot happen with origin)

    ProblemBuilder b;
    const int x = b.add_var();
    const int y = b.add_var();
    b.minimize(lp.c0 * LinExpr::var(x) + lp.c1 * LinExpr::var(y));
    b.nonneg(LinExpr::var(x));
    b.nonneg(1.0 - LinExpr::var(x));
    b.nonneg(LinExpr::var(y));
    b.nonneg(1.0 - LinExpr::var(y));
    for (const auto& cc : lp.cuts)
      b.nonneg(LinExpr(cc[2]) - cc[0] * LinExpr::var(x) -
               cc[1] * LinExpr::var(y));
    const auto sol = solve(b.build());
    REQUIRE(sol.ok());
    CHECK(std::abs(sol.objective - ref) <= 2e-3);
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("random SOCP vs grid search") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const double c0 = u(rng), c1 = u(rng);
    const double r = 0.3 + std::abs(u(rng));
    // min c^T v s.t. ||v - (0.5, 0.5)|| <= r, v in [0,1]^2
    double ref = 1e300;
    for (int i = 0; i <= 1000; ++i)
      for (int j = 0; j <= 1000; ++j) {
        const double x = i * 1e-3, y = j * 1e-3;
        if (std::hypot(x - 0.5, y - 0.5) <= r)
          ref = std::min(ref, c0 * x + c1 * y);
      }
    ProblemBuilder b;
    const int x = b.add_var();
    const int y = b.add_var();
    b.minimize(c0 * LinExpr::var(x) + c1 * LinExpr::var(y));
    b.nonneg(LinExpr::var(x));
    b.nonneg(1.0 - LinExpr::var(x));
    b.nonneg(LinExpr::var(y));
    b.nonneg(1.0 - LinExpr::var(y));
    b.soc({LinExpr(r), LinExpr::var(x) - 0.5, LinExpr::var(y) - 0.5});
    const auto sol = solve(b.build());
    REQUIRE(sol.ok());
    CHECK(std::abs(sol.objective - ref) <= 2e-3);
  }
}

TEST_CASE("determinism") {
  ProblemBuilder b;
  const int x = b.add_var();
  const int y = b.add_var();
  b.minimize(LinExpr::var(x) + 0.3 * LinExpr::var(y));
  b.nonneg(LinExpr::var(x) + LinExpr::var(y) - 1.0);
  b.nonneg(LinExpr::var(x));
  b.nonneg(LinExpr::var(y));
  b.soc({LinExpr(2.0), LinExpr::var(x), LinExpr::var(y)});
  const auto p = b.build();
  const auto s1 = solve(p);
  const auto s2 = solve(p);
  REQUIRE(s1.ok());
  CHECK(s1.x == s2.x);
  CHECK(s1.objective == s2.objective);
}

TEST_CASE("validation and dump") {
  ConicProblem p;
  p.num_vars = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);

  ProblemBuilder b;
  const int x = b.add_var();
  b.minimize(LinExpr::var(x));
  b.nonneg(LinExpr::var(x) - 1.0);
  b.rsoc(LinExpr::var(x), LinExpr(1.0), {LinExpr(0.5)});
  const auto prob = b.build();
  std::ostringstream os;
  prob.dump(os);
  const std::string text = os.str();
  CHECK(text.find("nonneg") != std::string::npos);
  CHECK(text.find("rsoc") != std::string::npos);
  CHECK(text.find("minimize") != std::string::npos);
}
