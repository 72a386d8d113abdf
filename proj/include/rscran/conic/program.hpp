#pragma once

#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rscran/conic/qcqp.hpp"
#include "rscran/types.hpp"

namespace rscran::conic {

enum class ConstraintRole { rate, power, fronthaul, other };

/// ||factor * w_block||^2
struct ComplexQuadTerm {
  int block = 0;
  MatrixXcd factor;
};

/// Re{coeff^H w_block}
struct ComplexLinearTerm {
  int block = 0;
  VectorXcd coeff;
};

/// sum ||F w_b||^2 + sum Re{c^H w_b} + sum a_r R_r + constant <= 0
struct ConicConstraint {
  std::vector<ComplexQuadTerm> quad;
  std::vector<ComplexLinearTerm> linear;
  std::vector<std::pair<int, double>> rate_terms;
  double constant = 0.0;
  ConstraintRole role = ConstraintRole::other;
  std::string label;
};

/// Convex program over complex beamformer blocks and real rate variables:
/// maximize rate_objective^T R subject to `constraints` and R >= 0.
struct ConicProgram {
  std::vector<int> block_dims;
  int num_rates = 0;
  VectorXd rate_objective;
  std::vector<ConicConstraint> constraints;

  int num_blocks() const { return static_cast<int>(block_dims.size()); }
  int num_complex_coords() const { return std::accumulate(block_dims.begin(), block_dims.end(), 0); }
  /// Scalar decision variables, counting a complex coordinate once.
  int scalar_variable_count() const { return num_complex_coords() + num_rates; }
  /// Dimension after splitting complex coordinates into real and imaginary parts.
  int real_dimension() const { return 2 * num_complex_coords() + num_rates; }
  int constraint_count() const { return static_cast<int>(constraints.size()); }

  int block_offset(int b) const {
    int off = 0;
    for (int i = 0; i < b; ++i) off += 2 * block_dims[i];
    return off;
  }
  int rate_offset() const { return 2 * num_complex_coords(); }
};

/// Layout of a real-lifted program: block b occupies [offset, offset + 2 d_b) with the real
/// parts first, then the imaginary parts; rates follow all blocks.
struct LiftedProgram {
  RealQcqp qcqp;
  std::vector<int> block_dims;
  int num_rates = 0;
  std::vector<ConstraintRole> roles;
};

inline MatrixXd lift_factor(const MatrixXcd& f) {
  const auto r = f.rows();
  const auto d = f.cols();
  MatrixXd out(2 * r, 2 * d);
  out.topLeftCorner(r, d) = f.real();
  out.topRightCorner(r, d) = -f.imag();
  out.bottomLeftCorner(r, d) = f.imag();
  out.bottomRightCorner(r, d) = f.real();
  return out;
}

inline MatrixXcd unlift_factor(const MatrixXd& f) {
  const auto r = f.rows() / 2;
  const auto d = f.cols() / 2;
  MatrixXcd out(r, d);
  out.real() = f.topLeftCorner(r, d);
  out.imag() = f.bottomLeftCorner(r, d);
  return out;
}

inline LiftedProgram lift(const ConicProgram& p) {
  if (p.rate_objective.size() != p.num_rates) throw std::invalid_argument("lift: rate objective size mismatch");
  LiftedProgram out;
  out.block_dims = p.block_dims;
  out.num_rates = p.num_rates;
  auto& q = out.qcqp;
  q.num_vars = p.real_dimension();
  q.cost = VectorXd::Zero(q.num_vars);
  const int r0 = p.rate_offset();
  for (int r = 0; r < p.num_rates; ++r) {
    q.cost[r0 + r] = -p.rate_objective[r];
    q.nonnegative.push_back(r0 + r);
  }
  for (const auto& c : p.constraints) {
    RealConstraint rc;
    rc.constant = c.constant;
    rc.label = c.label;
    for (const auto& t : c.quad) {
      if (t.factor.cols() != p.block_dims.at(t.block)) throw std::invalid_argument("lift: factor/block size mismatch");
      rc.quad.push_back({p.block_offset(t.block), lift_factor(t.factor)});
    }
    for (const auto& t : c.linear) {
      const int off = p.block_offset(t.block);
      const int d = p.block_dims.at(t.block);
      if (t.coeff.size() != d) throw std::invalid_argument("lift: linear term/block size mismatch");
      // Re{c^H w} = Re(c)^T Re(w) + Im(c)^T Im(w)
      for (int i = 0; i < d; ++i) rc.linear.emplace_back(off + i, t.coeff[i].real());
      for (int i = 0; i < d; ++i) rc.linear.emplace_back(off + d + i, t.coeff[i].imag());
    }
    for (const auto& [r, a] : c.rate_terms) rc.linear.emplace_back(r0 + r, a);
    q.constraints.push_back(std::move(rc));
    out.roles.push_back(c.role);
  }
  return out;
}

/// Inverse of `lift` for programs produced by it.
inline ConicProgram unlift(const LiftedProgram& lp) {
  ConicProgram p;
  p.block_dims = lp.block_dims;
  p.num_rates = lp.num_rates;
  const int r0 = p.rate_offset();
  p.rate_objective.resize(p.num_rates);
  for (int r = 0; r < p.num_rates; ++r) p.rate_objective[r] = -lp.qcqp.cost[r0 + r];

  std::vector<int> block_of_offset(r0 + 1, -1);
  for (int b = 0; b < p.num_blocks(); ++b) block_of_offset[p.block_offset(b)] = b;

  for (std::size_t ci = 0; ci < lp.qcqp.constraints.size(); ++ci) {
    const auto& rc = lp.qcqp.constraints[ci];
    ConicConstraint c;
    c.constant = rc.constant;
    c.label = rc.label;
    c.role = ci < lp.roles.size() ? lp.roles[ci] : ConstraintRole::other;
    for (const auto& qb : rc.quad) c.quad.push_back({block_of_offset.at(qb.offset), unlift_factor(qb.factor)});
    std::size_t i = 0;
    while (i < rc.linear.size()) {
      const int j = rc.linear[i].first;
      if (j >= r0) {
        c.rate_terms.emplace_back(j - r0, rc.linear[i].second);
        ++i;
        continue;
      }
      const int b = block_of_offset.at(j);
      const int d = p.block_dims[b];
      ComplexLinearTerm t{b, VectorXcd(d)};
      for (int k = 0; k < d; ++k) t.coeff[k] = {rc.linear[i + k].second, rc.linear[i + d + k].second};
      c.linear.push_back(std::move(t));
      i += 2 * static_cast<std::size_t>(d);
    }
    p.constraints.push_back(std::move(c));
  }
  return p;
}

/// Values of a solved program in complex form.
struct ConicSolution {
  std::vector<VectorXcd> blocks;
  VectorXd rates;
};

inline ConicSolution unlift_solution(const LiftedProgram& lp, const VectorXd& x) {
  ConicSolution sol;
  int off = 0;
  for (int d : lp.block_dims) {
    VectorXcd w(d);
    for (int i = 0; i < d; ++i) w[i] = {x[off + i], x[off + d + i]};
    sol.blocks.push_back(std::move(w));
    off += 2 * d;
  }
  sol.rates = x.segment(off, lp.num_rates);
  return sol;
}

inline VectorXd lift_solution(const LiftedProgram& lp, const ConicSolution& sol) {
  VectorXd x(lp.qcqp.num_vars);
  int off = 0;
  for (std::size_t b = 0; b < lp.block_dims.size(); ++b) {
    const int d = lp.block_dims[b];
    x.segment(off, d) = sol.blocks[b].real();
    x.segment(off + d, d) = sol.blocks[b].imag();
    off += 2 * d;
  }
  x.segment(off, lp.num_rates) = sol.rates;
  return x;
}

}  // namespace rscran::conic
