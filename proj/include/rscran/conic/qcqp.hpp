#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "rscran/types.hpp"

namespace rscran::conic {

/// One column block of a stacked quadratic form: contributes ||factor * x[offset .. offset+cols)||^2.
struct QuadBlock {
  int offset = 0;
  MatrixXd factor;
};

/// sum_b ||F_b x_b||^2 + a^T x + constant <= 0. Linear when `quad` is empty.
struct RealConstraint {
  std::vector<QuadBlock> quad;
  std::vector<std::pair<int, double>> linear;
  double constant = 0.0;
  std::string label;

  bool is_linear() const { return quad.empty(); }

  double evaluate(const VectorXd& x) const {
    double v = constant;
    for (const auto& [j, a] : linear) v += a * x[j];
    for (const auto& q : quad) v += (q.factor * x.segment(q.offset, q.factor.cols())).squaredNorm();
    return v;
  }

  /// Gradient of `evaluate` at x.
  VectorXd gradient(const VectorXd& x) const {
    VectorXd g = VectorXd::Zero(x.size());
    for (const auto& [j, a] : linear) g[j] += a;
    for (const auto& q : quad) {
      const auto xb = x.segment(q.offset, q.factor.cols());
      g.segment(q.offset, q.factor.cols()) += 2.0 * q.factor.transpose() * (q.factor * xb);
    }
    return g;
  }
};

/// minimize cost^T x subject to convex quadratic constraints and x_j >= 0 for j in `nonnegative`.
struct RealQcqp {
  int num_vars = 0;
  VectorXd cost;
  std::vector<RealConstraint> constraints;
  std::vector<int> nonnegative;

  /// Largest constraint value (positive means violated), including bounds.
  double max_violation(const VectorXd& x) const {
    double v = 0.0;
    for (const auto& c : constraints) v = std::max(v, c.evaluate(x));
    for (int j : nonnegative) v = std::max(v, -x[j]);
    return v;
  }
};

}  // namespace rscran::conic
