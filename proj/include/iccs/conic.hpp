#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "iccs/types.hpp"

namespace iccs {

// Sparse affine expression a^T x + constant over problem variables.
struct LinExpr {
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;

  LinExpr() = default;
  /*implicit*/ LinExpr(double c) : constant(c) {}
  static LinExpr var(int index, double coef = 1.0) {
    LinExpr e;
    e.terms.push_back({index, coef});
    return e;
  }

  LinExpr& operator+=(const LinExpr& o);
  LinExpr& operator-=(const LinExpr& o);
  LinExpr& operator*=(double s);
  friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
  friend LinExpr operator*(double s, LinExpr a) { return a *= s; }
  friend LinExpr operator*(LinExpr a, double s) { return a *= s; }
  friend LinExpr operator-(LinExpr a) { return a *= -1.0; }

  double eval(const Vec& x) const;
};

enum class ConeKind { nonneg, soc, rsoc };

struct ConeBlock {
  ConeKind kind;
  int dim;
};

enum class SolveStatus { optimal, infeasible, unbounded, max_iter };

// Standard-form convex program: minimize c^T x subject to
// b - A x belonging to a product of nonneg / second-order / rotated cones.
// Rows are stored sparse, grouped by cone block.
struct ConicProblem {
  int num_vars = 0;
  Vec objective;                  // c
  double objective_offset = 0.0;  // added to reported objective values
  std::vector<std::vector<std::pair<int, double>>> rows;  // -A, row-wise
  Vec offsets;                                            // b
  std::vector<ConeBlock> cones;

  int num_rows() const { return static_cast<int>(rows.size()); }
  void validate() const;
  void dump(std::ostream& os) const;
};

// status == optimal means the relative primal/dual/gap residuals are at or
// below the solve tolerance, except when the iteration stalls on a
// degenerate boundary, where a point within a bounded reduced-accuracy
// floor (<= 9e-8) is still accepted; global_solver_stats() tracks the
// worst residual ever accepted as optimal.
struct ConicSolution {
  SolveStatus status = SolveStatus::max_iter;
  Vec x;              // primal point
  Vec y;              // dual point (conic multipliers, one per row)
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  int iterations = 0;

  bool ok() const { return status == SolveStatus::optimal; }
};

// Aggregate KKT quality over all optimal solves, for post-run audits.
struct SolverStats {
  double worst_residual = 0.0;
  long long num_solves = 0;
  void record(const ConicSolution& s);
};
SolverStats& global_solver_stats();

ConicSolution solve(const ConicProblem& p, double tol = 1e-8,
                    int max_iter = 200);

class ProblemBuilder {
 public:
  int add_var() { return n_++; }
  std::vector<int> add_vars(int count);

  void minimize(const LinExpr& obj);

  // expr >= 0
  void nonneg(const LinExpr& e);
  // exprs[0] >= || exprs[1:] ||
  void soc(const std::vector<LinExpr>& exprs);
  // p * q >= sum of squares of u, with p, q >= 0
  void rsoc(const LinExpr& p, const LinExpr& q, const std::vector<LinExpr>& u);
  // equality via paired inequalities
  void equal(const LinExpr& e, double value);

  ConicProblem build() const;
  int num_vars() const { return n_; }

 private:
  void push_rows(ConeKind kind, const std::vector<LinExpr>& exprs);

  int n_ = 0;
  LinExpr objective_;
  std::vector<std::vector<std::pair<int, double>>> rows_;
  std::vector<double> offsets_;
  std::vector<ConeBlock> cones_;
};

// u * v >= w^2 for affine u, v (both constrained nonnegative) and affine w.
void encode_hyperbolic(ProblemBuilder& b, const LinExpr& u, const LinExpr& v,
                       const LinExpr& w);

// f^3 <= s for f >= 0, via an auxiliary y with f^2 <= y and y^2 <= s*f.
void encode_cube_bound(ProblemBuilder& b, const LinExpr& f, const LinExpr& s);

}  // namespace iccs
