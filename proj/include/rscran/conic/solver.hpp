#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>

#include "rscran/conic/program.hpp"
#include "rscran/conic/qcqp.hpp"
#include "rscran/types.hpp"

namespace rscran::conic {

enum class SolveStatus { optimal, inaccurate, max_iter, infeasible, unbounded };

inline std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::inaccurate: return "inaccurate";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
  }
  return "?";
}

struct SolverOptions {
  double tol = 1e-9;
  int max_iter = 200;
  bool verbose = false;  // per-iteration progress on stderr
};

struct SolverResult {
  SolveStatus status = SolveStatus::max_iter;
  VectorXd x;
  double objective = 0.0;  // cost^T x
  std::vector<double> multipliers;        // one per constraint, >= 0
  std::vector<double> bound_multipliers;  // one per nonnegative variable
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double kkt_residual = 0.0;  // max of the three above, gap taken relative
  std::vector<double> merit;  // ||(rx, rz, rtau)|| per iterate of the embedding

  bool usable() const { return status == SolveStatus::optimal || status == SolveStatus::inaccurate; }
};

namespace detail {

// Second-order cone row block {s0 >= ||s_1..||} encoding ||A x||^2 + a^T x + b <= 0:
//   s0 = (1 - b)/2 - a^T x / 2,  s1 = (-1 - b)/2 - a^T x / 2,  s_tail = A x.
struct SocRows {
  int row = 0;
  int dim = 0;
  int constraint = 0;
  VectorXd a;  // dense, n
  double b = 0.0;
  std::vector<QuadBlock> blocks;
  std::vector<int> tail_offset;
  std::vector<MatrixXd> gram;  // F^T F per block
};

struct LpRow {
  std::vector<std::pair<int, double>> coef;  // G row
  double h = 0.0;
  int constraint = -1;  // -1 for a bound
  int bound_var = -1;
};

struct ConeScaling {
  // LP: w = sqrt(s/z), lambda = sqrt(s z)
  VectorXd lp_w;
  // SOC: eta, wbar (unit J-norm)
  std::vector<double> eta;
  std::vector<VectorXd> wbar;
  VectorXd lambda;
};

class ConeProblem {
 public:
  explicit ConeProblem(const RealQcqp& q) : n_(q.num_vars), c_(q.cost) {
    if (c_.size() != n_) throw std::invalid_argument("solve: cost vector size mismatch");
    for (std::size_t ci = 0; ci < q.constraints.size(); ++ci) {
      const auto& con = q.constraints[ci];
      if (con.is_linear()) {
        const bool empty = std::all_of(con.linear.begin(), con.linear.end(), [](const auto& e) { return e.second == 0.0; });
        if (empty) {
          // 0 <= -constant: no row needed, or infeasible outright
          if (con.constant > 0.0) trivially_infeasible_ = true;
          continue;
        }
        LpRow r;
        r.coef = con.linear;
        r.h = -con.constant;
        r.constraint = static_cast<int>(ci);
        lp_.push_back(std::move(r));
      }
    }
    for (int j : q.nonnegative) {
      LpRow r;
      r.coef = {{j, -1.0}};
      r.bound_var = j;
      lp_.push_back(std::move(r));
    }
    int row = static_cast<int>(lp_.size());
    for (std::size_t ci = 0; ci < q.constraints.size(); ++ci) {
      const auto& con = q.constraints[ci];
      if (con.is_linear()) continue;
      SocRows soc;
      soc.row = row;
      soc.constraint = static_cast<int>(ci);
      soc.a = VectorXd::Zero(n_);
      for (const auto& [j, v] : con.linear) soc.a[j] += v;
      soc.b = con.constant;
      int tail = 0;
      for (const auto& qb : con.quad) {
        if (qb.offset < 0 || qb.offset + qb.factor.cols() > n_)
          throw std::invalid_argument("solve: quadratic block out of range");
        soc.blocks.push_back(qb);
        soc.tail_offset.push_back(tail);
        soc.gram.push_back(qb.factor.transpose() * qb.factor);
        tail += static_cast<int>(qb.factor.rows());
      }
      soc.dim = 2 + tail;
      row += soc.dim;
      soc_.push_back(std::move(soc));
    }
    m_ = row;
    h_ = VectorXd::Zero(m_);
    for (std::size_t i = 0; i < lp_.size(); ++i) h_[i] = lp_[i].h;
    for (const auto& soc : soc_) {
      h_[soc.row] = (1.0 - soc.b) / 2.0;
      h_[soc.row + 1] = (-1.0 - soc.b) / 2.0;
    }
  }

  int n() const { return n_; }
  bool trivially_infeasible() const { return trivially_infeasible_; }
  int m() const { return m_; }
  int num_lp() const { return static_cast<int>(lp_.size()); }
  int degree() const { return num_lp() + static_cast<int>(soc_.size()); }
  const VectorXd& c() const { return c_; }
  const VectorXd& h() const { return h_; }
  const std::vector<LpRow>& lp() const { return lp_; }
  const std::vector<SocRows>& soc() const { return soc_; }

  VectorXd G(const VectorXd& x) const {
    VectorXd out(m_);
    for (std::size_t i = 0; i < lp_.size(); ++i) {
      double v = 0.0;
      for (const auto& [j, a] : lp_[i].coef) v += a * x[j];
      out[i] = v;
    }
    for (const auto& soc : soc_) {
      const double half = 0.5 * soc.a.dot(x);
      out[soc.row] = half;
      out[soc.row + 1] = half;
      for (std::size_t b = 0; b < soc.blocks.size(); ++b) {
        const auto& qb = soc.blocks[b];
        out.segment(soc.row + 2 + soc.tail_offset[b], qb.factor.rows()) =
            -(qb.factor * x.segment(qb.offset, qb.factor.cols()));
      }
    }
    return out;
  }

  VectorXd Gt(const VectorXd& z) const {
    VectorXd out = VectorXd::Zero(n_);
    for (std::size_t i = 0; i < lp_.size(); ++i)
      for (const auto& [j, a] : lp_[i].coef) out[j] += a * z[i];
    for (const auto& soc : soc_) {
      out += (0.5 * (z[soc.row] + z[soc.row + 1])) * soc.a;
      for (std::size_t b = 0; b < soc.blocks.size(); ++b) {
        const auto& qb = soc.blocks[b];
        out.segment(qb.offset, qb.factor.cols()) -=
            qb.factor.transpose() * z.segment(soc.row + 2 + soc.tail_offset[b], qb.factor.rows());
      }
    }
    return out;
  }

  /// A^T y for the tail rows of one cone.
  VectorXd At(const SocRows& soc, const Eigen::Ref<const VectorXd>& tail) const {
    VectorXd out = VectorXd::Zero(n_);
    for (std::size_t b = 0; b < soc.blocks.size(); ++b) {
      const auto& qb = soc.blocks[b];
      out.segment(qb.offset, qb.factor.cols()) +=
          qb.factor.transpose() * tail.segment(soc.tail_offset[b], qb.factor.rows());
    }
    return out;
  }

  /// sum_lp d_i g_i g_i^T + sum_soc (alpha v v^T + beta A^T A), lower triangle filled.
  MatrixXd assemble(const VectorXd& lp_weight, const std::vector<VectorXd>& soc_v, const std::vector<double>& alpha,
                    const std::vector<double>& beta) const {
    MatrixXd H = MatrixXd::Zero(n_, n_);
    for (std::size_t i = 0; i < lp_.size(); ++i) {
      const auto& coef = lp_[i].coef;
      for (const auto& [j, a] : coef)
        for (const auto& [k, b] : coef) H(j, k) += lp_weight[i] * a * b;
    }
    for (std::size_t c = 0; c < soc_.size(); ++c) {
      const auto& soc = soc_[c];
      H.selfadjointView<Eigen::Lower>().rankUpdate(soc_v[c], alpha[c]);
      for (std::size_t b = 0; b < soc.blocks.size(); ++b) {
        const int off = soc.blocks[b].offset;
        const auto d = soc.gram[b].rows();
        H.block(off, off, d, d) += beta[c] * soc.gram[b];
      }
    }
    return H.selfadjointView<Eigen::Lower>();
  }

 private:
  int n_ = 0;
  int m_ = 0;
  VectorXd c_;
  VectorXd h_;
  std::vector<LpRow> lp_;
  std::vector<SocRows> soc_;
  bool trivially_infeasible_ = false;
};

inline double soc_jnorm2(const Eigen::Ref<const VectorXd>& u) { return u[0] * u[0] - u.tail(u.size() - 1).squaredNorm(); }

// u o v
inline void jordan_product(const ConeProblem& p, const VectorXd& u, const VectorXd& v, VectorXd& out) {
  out.resize(u.size());
  const int nl = p.num_lp();
  out.head(nl) = u.head(nl).cwiseProduct(v.head(nl));
  for (const auto& soc : p.soc()) {
    const auto us = u.segment(soc.row, soc.dim);
    const auto vs = v.segment(soc.row, soc.dim);
    out[soc.row] = us.dot(vs);
    out.segment(soc.row + 1, soc.dim - 1) = us[0] * vs.tail(soc.dim - 1) + vs[0] * us.tail(soc.dim - 1);
  }
}

// x with lambda o x = v
inline VectorXd jordan_divide(const ConeProblem& p, const VectorXd& lambda, const VectorXd& v) {
  VectorXd out(v.size());
  const int nl = p.num_lp();
  out.head(nl) = v.head(nl).cwiseQuotient(lambda.head(nl));
  for (const auto& soc : p.soc()) {
    const auto l = lambda.segment(soc.row, soc.dim);
    const auto vs = v.segment(soc.row, soc.dim);
    const auto l1 = l.tail(soc.dim - 1);
    const double det = soc_jnorm2(l);
    const double x0 = (l[0] * vs[0] - l1.dot(vs.tail(soc.dim - 1))) / det;
    out[soc.row] = x0;
    out.segment(soc.row + 1, soc.dim - 1) = (vs.tail(soc.dim - 1) - x0 * l1) / l[0];
  }
  return out;
}

inline void apply_wbar(const VectorXd& w, Eigen::Ref<VectorXd> v, bool inverse) {
  const auto d = w.size();
  const double w0 = w[0];
  const auto w1 = w.tail(d - 1);
  const double v0 = v[0];
  const double dot = w1.dot(v.tail(d - 1));
  if (!inverse) {
    v[0] = w0 * v0 + dot;
    v.tail(d - 1) += (v0 + dot / (1.0 + w0)) * w1;
  } else {
    v[0] = w0 * v0 - dot;
    v.tail(d - 1) += (-v0 + dot / (1.0 + w0)) * w1;
  }
}

inline VectorXd apply_W(const ConeProblem& p, const ConeScaling& sc, const VectorXd& v, bool inverse) {
  VectorXd out = v;
  const int nl = p.num_lp();
  if (inverse) out.head(nl) = out.head(nl).cwiseQuotient(sc.lp_w);
  else out.head(nl) = out.head(nl).cwiseProduct(sc.lp_w);
  for (std::size_t c = 0; c < p.soc().size(); ++c) {
    const auto& soc = p.soc()[c];
    auto seg = out.segment(soc.row, soc.dim);
    apply_wbar(sc.wbar[c], seg, inverse);
    seg *= inverse ? 1.0 / sc.eta[c] : sc.eta[c];
  }
  return out;
}

inline bool compute_scaling(const ConeProblem& p, const VectorXd& s, const VectorXd& z, ConeScaling& sc) {
  const int nl = p.num_lp();
  sc.lp_w.resize(nl);
  sc.lambda.resize(p.m());
  for (int i = 0; i < nl; ++i) {
    if (!(s[i] > 0.0) || !(z[i] > 0.0)) return false;
    sc.lp_w[i] = std::sqrt(s[i] / z[i]);
    sc.lambda[i] = std::sqrt(s[i] * z[i]);
  }
  sc.eta.resize(p.soc().size());
  sc.wbar.resize(p.soc().size());
  for (std::size_t c = 0; c < p.soc().size(); ++c) {
    const auto& soc = p.soc()[c];
    const VectorXd ss = s.segment(soc.row, soc.dim);
    const VectorXd zz = z.segment(soc.row, soc.dim);
    const double sn = soc_jnorm2(ss);
    const double zn = soc_jnorm2(zz);
    if (!(sn > 0.0) || !(zn > 0.0) || ss[0] <= 0.0 || zz[0] <= 0.0) return false;
    const VectorXd sb = ss / std::sqrt(sn);
    const VectorXd zb = zz / std::sqrt(zn);
    const double gamma = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
    VectorXd w = sb;
    w[0] += zb[0];
    w.tail(soc.dim - 1) -= zb.tail(soc.dim - 1);
    w /= 2.0 * gamma;
    sc.wbar[c] = w;
    sc.eta[c] = std::pow(sn / zn, 0.25);
    VectorXd lz = zz;
    apply_wbar(w, lz, false);
    sc.lambda.segment(soc.row, soc.dim) = sc.eta[c] * lz;
  }
  return sc.lambda.allFinite();
}

// Largest alpha with u + alpha d in the cone (infinity when unbounded).
inline double max_step(const ConeProblem& p, const VectorXd& u, const VectorXd& d) {
  double alpha = std::numeric_limits<double>::infinity();
  const int nl = p.num_lp();
  for (int i = 0; i < nl; ++i)
    if (d[i] < 0.0) alpha = std::min(alpha, -u[i] / d[i]);
  for (const auto& soc : p.soc()) {
    const auto us = u.segment(soc.row, soc.dim);
    const auto ds = d.segment(soc.row, soc.dim);
    const double qa = soc_jnorm2(ds);
    const double qb = 2.0 * (us[0] * ds[0] - us.tail(soc.dim - 1).dot(ds.tail(soc.dim - 1)));
    const double qc = std::max(soc_jnorm2(us), 0.0);
    double root = std::numeric_limits<double>::infinity();
    if (qa == 0.0) {
      if (qb < 0.0) root = -qc / qb;
    } else {
      const double disc = qb * qb - 4.0 * qa * qc;
      if (disc >= 0.0) {
        const double q = -0.5 * (qb + std::copysign(std::sqrt(disc), qb));
        for (double r : {q / qa, q != 0.0 ? qc / q : std::numeric_limits<double>::infinity()})
          if (r > 0.0) root = std::min(root, r);
      }
    }
    // the cone's second branch is only reachable through the apex, which the roots cover;
    // guard the leading coordinate for roundoff
    if (ds[0] < 0.0) root = std::min(root, -us[0] / ds[0]);
    alpha = std::min(alpha, root);
  }
  return alpha;
}

// Shift v into the interior: returns v + (1 + alpha) e when its smallest cone eigenvalue -alpha <= 0.
inline void make_interior(const ConeProblem& p, VectorXd& v) {
  double lo = std::numeric_limits<double>::infinity();
  const int nl = p.num_lp();
  for (int i = 0; i < nl; ++i) lo = std::min(lo, v[i]);
  for (const auto& soc : p.soc()) lo = std::min(lo, v[soc.row] - v.segment(soc.row + 1, soc.dim - 1).norm());
  if (lo == std::numeric_limits<double>::infinity() || lo > 0.0) return;
  const double shift = 1.0 - lo;
  for (int i = 0; i < nl; ++i) v[i] += shift;
  for (const auto& soc : p.soc()) v[soc.row] += shift;
}

class KktSolver {
 public:
  bool factor(MatrixXd H) {
    H_ = std::move(H);
    double scale = 1.0;
    for (Eigen::Index i = 0; i < H_.rows(); ++i) scale = std::max(scale, std::abs(H_(i, i)));
    double reg = 1e-14 * scale;
    for (int attempt = 0; attempt < 8; ++attempt) {
      MatrixXd R = H_;
      R.diagonal().array() += reg;
      llt_.compute(R);
      if (llt_.info() == Eigen::Success) return true;
      reg *= 100.0;
    }
    return false;
  }

  VectorXd solve(const VectorXd& rhs) const {
    VectorXd x = llt_.solve(rhs);
    for (int i = 0; i < 3; ++i) {
      const VectorXd r = rhs - H_ * x;
      if (r.norm() <= 1e-15 * (1.0 + rhs.norm())) break;
      x += llt_.solve(r);
    }
    return x;
  }

 private:
  MatrixXd H_;
  Eigen::LLT<MatrixXd> llt_;
};

}  // namespace detail

/// Primal-dual interior-point method on the homogeneous self-dual embedding, with
/// Nesterov-Todd scaling and Mehrotra predictor-corrector steps. Quadratic constraints
/// become rotated second-order cones built from their factors; linear constraints and
/// bounds become nonnegative-orthant rows.
inline SolverResult solve(const RealQcqp& qcqp, const SolverOptions& opts = {}) {
  using namespace detail;
  const ConeProblem p(qcqp);
  const int n = p.n();
  const int m = p.m();
  const double tol = opts.tol;
  const double h_norm = p.h().norm();
  const double c_norm = p.c().norm();

  SolverResult res;
  res.multipliers.assign(qcqp.constraints.size(), 0.0);
  res.bound_multipliers.assign(qcqp.nonnegative.size(), 0.0);
  if (p.trivially_infeasible()) {
    res.x = VectorXd::Zero(n);
    res.status = SolveStatus::infeasible;
    return res;
  }
  if (m == 0) {
    res.x = VectorXd::Zero(n);
    res.status = c_norm == 0.0 ? SolveStatus::optimal : SolveStatus::unbounded;
    return res;
  }

  KktSolver kkt;
  std::vector<VectorXd> soc_v(p.soc().size());
  std::vector<double> alpha(p.soc().size(), 2.0);
  std::vector<double> beta(p.soc().size(), 1.0);
  for (std::size_t c = 0; c < p.soc().size(); ++c) soc_v[c] = 0.5 * p.soc()[c].a;

  // Initial point from least-squares projections.
  VectorXd x, s, z;
  {
    if (!kkt.factor(p.assemble(VectorXd::Ones(p.num_lp()), soc_v, alpha, beta))) {
      res.status = SolveStatus::inaccurate;
      res.x = VectorXd::Zero(n);
      return res;
    }
    x = kkt.solve(p.Gt(p.h()));
    s = p.h() - p.G(x);
    z = p.G(kkt.solve(-p.c()));
    make_interior(p, s);
    make_interior(p, z);
  }
  double tau = 1.0;
  double kappa = 1.0;
  const double nu = p.degree();

  struct Best {
    double score = std::numeric_limits<double>::infinity();
    VectorXd x, z;
    double tau = 1.0, pres = 0.0, dres = 0.0, gap = 0.0;
  } best;

  auto finish = [&](SolveStatus status, const VectorXd& xf, const VectorXd& zf, double tf) {
    res.status = status;
    const double t = (status == SolveStatus::infeasible || status == SolveStatus::unbounded) ? 1.0 : tf;
    res.x = xf / t;
    res.objective = p.c().dot(res.x);
    for (int i = 0; i < p.num_lp(); ++i) {
      const auto& row = p.lp()[i];
      if (row.constraint >= 0) res.multipliers[row.constraint] = zf[i] / t;
    }
    for (std::size_t j = 0, i = 0; i < p.lp().size(); ++i)
      if (p.lp()[i].bound_var >= 0) res.bound_multipliers[j++] = zf[i] / t;
    // A cone's dual z enters stationarity as G_c^T z_c; its scalar multiplier is the projection
    // of that term on the constraint gradient, which equals (z0 + z1) / 2 at exact
    // complementarity and stays consistent with the dual residual before it.
    for (const auto& soc : p.soc()) {
      VectorXd zc = VectorXd::Zero(p.m());
      zc.segment(soc.row, soc.dim) = zf.segment(soc.row, soc.dim) / t;
      const VectorXd term = p.Gt(zc);
      const VectorXd grad = qcqp.constraints[soc.constraint].gradient(res.x);
      const double gg = grad.squaredNorm();
      res.multipliers[soc.constraint] =
          gg > 1e-24 ? std::max(term.dot(grad) / gg, 0.0) : 0.5 * (zc[soc.row] + zc[soc.row + 1]);
    }
    return res;
  };

  ConeScaling sc;
  for (int iter = 0;; ++iter) {
    const VectorXd Gx = p.G(x);
    const VectorXd Gtz = p.Gt(z);
    const VectorXd rx = Gtz + tau * p.c();
    const VectorXd rz = s + Gx - tau * p.h();
    const double cx = p.c().dot(x);
    const double hz = p.h().dot(z);
    const double rt = kappa + cx + hz;
    res.merit.push_back(std::sqrt(rx.squaredNorm() + rz.squaredNorm() + rt * rt));
    res.iterations = iter;

    const double pres = rz.norm() / tau / std::max(1.0, h_norm);
    const double dres = rx.norm() / tau / std::max(1.0, c_norm);
    const double gap = s.dot(z) / (tau * tau);
    const double pcost = cx / tau;
    const double dcost = -hz / tau;
    const double rel_gap = gap / std::max(1.0, std::min(std::abs(pcost), std::abs(dcost)));
    res.primal_residual = pres;
    res.dual_residual = dres;
    res.gap = gap;
    res.kkt_residual = std::max({pres, dres, rel_gap});
    if (std::isfinite(res.kkt_residual) && res.kkt_residual < best.score) {
      best = {res.kkt_residual, x, z, tau, pres, dres, gap};
    }

    if (opts.verbose)
      std::fprintf(stderr, "%3d pcost %+.9e dcost %+.9e gap %.2e pres %.2e dres %.2e k/t %.2e\n", iter, pcost, dcost,
                   gap, pres, dres, kappa / tau);
    if (pres <= tol && dres <= tol && rel_gap <= tol) return finish(SolveStatus::optimal, x, z, tau);
    if (hz < 0.0 && kappa > tau && Gtz.norm() <= tol * (-hz)) return finish(SolveStatus::infeasible, x, z, tau);
    if (cx < 0.0 && kappa > tau && (Gx + s).norm() <= tol * (-cx)) return finish(SolveStatus::unbounded, x, z, tau);
    if (iter >= opts.max_iter) break;

    if (!compute_scaling(p, s, z, sc)) {
      if (opts.verbose) std::fprintf(stderr, "scaling failed\n");
      break;
    }
    const VectorXd lp_weight = z.head(p.num_lp()).cwiseQuotient(s.head(p.num_lp()));
    for (std::size_t c = 0; c < p.soc().size(); ++c) {
      const auto& soc = p.soc()[c];
      const VectorXd& w = sc.wbar[c];
      soc_v[c] = (0.5 * (w[0] - w[1])) * soc.a + p.At(soc, w.tail(soc.dim - 2));
      const double inv_eta2 = 1.0 / (sc.eta[c] * sc.eta[c]);
      alpha[c] = 2.0 * inv_eta2;
      beta[c] = inv_eta2;
    }
    if (!kkt.factor(p.assemble(lp_weight, soc_v, alpha, beta))) {
      if (opts.verbose) std::fprintf(stderr, "factorization failed\n");
      break;
    }

    // [0 G^T; G -W^2] [x; z] = [r1; r2]
    auto solve_once = [&](const VectorXd& r1, const VectorXd& r2, VectorXd& xo, VectorXd& zo) {
      const VectorXd w2r2 = apply_W(p, sc, apply_W(p, sc, r2, true), true);
      xo = kkt.solve(r1 + p.Gt(w2r2));
      zo = apply_W(p, sc, apply_W(p, sc, p.G(xo) - r2, true), true);
    };
    // Refine against the unreduced system, whose residual the normal equations lose.
    auto solve_reduced = [&](const VectorXd& r1, const VectorXd& r2, VectorXd& xo, VectorXd& zo) {
      solve_once(r1, r2, xo, zo);
      double prev = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 5; ++k) {
        const VectorXd e1 = r1 - p.Gt(zo);
        const VectorXd e2 = r2 - p.G(xo) + apply_W(p, sc, apply_W(p, sc, zo, false), false);
        const double err = std::sqrt(e1.squaredNorm() + e2.squaredNorm());
        if (err <= 1e-14 * (1.0 + std::sqrt(r1.squaredNorm() + r2.squaredNorm())) || err >= 0.5 * prev) break;
        prev = err;
        VectorXd dx, dz;
        solve_once(e1, e2, dx, dz);
        xo += dx;
        zo += dz;
      }
    };

    VectorXd x1, z1;
    solve_reduced(-p.c(), p.h(), x1, z1);
    const double denom_base = p.c().dot(x1) + p.h().dot(z1) - kappa / tau;

    struct Step {
      VectorXd dx, dz, ds_scaled, dz_scaled, ds;
      double dtau = 0.0, dkappa = 0.0;
    };
    auto direction = [&](const VectorXd& d_x, const VectorXd& d_z, double d_tau, const VectorXd& d_s,
                         double d_kappa) {
      Step st;
      const VectorXd lds = jordan_divide(p, sc.lambda, d_s);
      VectorXd x2, z2;
      solve_reduced(d_x, d_z - apply_W(p, sc, lds, false), x2, z2);
      st.dtau = (d_tau - d_kappa / tau - p.c().dot(x2) - p.h().dot(z2)) / denom_base;
      st.dx = x2 + st.dtau * x1;
      st.dz = z2 + st.dtau * z1;
      st.dz_scaled = apply_W(p, sc, st.dz, false);
      st.ds_scaled = lds - st.dz_scaled;
      st.ds = apply_W(p, sc, st.ds_scaled, false);
      st.dkappa = (d_kappa - kappa * st.dtau) / tau;
      return st;
    };
    auto step_length = [&](const Step& st) {
      double a = std::min(max_step(p, sc.lambda, st.ds_scaled), max_step(p, sc.lambda, st.dz_scaled));
      if (st.dtau < 0.0) a = std::min(a, -tau / st.dtau);
      if (st.dkappa < 0.0) a = std::min(a, -kappa / st.dkappa);
      return a;
    };

    VectorXd ll;
    jordan_product(p, sc.lambda, sc.lambda, ll);
    const Step aff = direction(-rx, -rz, -rt, -ll, -tau * kappa);
    const double a_aff = std::min(1.0, step_length(aff));
    const double sigma = std::clamp(std::pow(1.0 - a_aff, 3), 0.0, 1.0);
    const double mu = (s.dot(z) + tau * kappa) / (nu + 1.0);

    VectorXd corr;
    jordan_product(p, aff.ds_scaled, aff.dz_scaled, corr);
    VectorXd d_s = -ll - corr;
    for (int i = 0; i < p.num_lp(); ++i) d_s[i] += sigma * mu;
    for (const auto& soc : p.soc()) d_s[soc.row] += sigma * mu;
    const double f = 1.0 - sigma;
    const Step st = direction(-f * rx, -f * rz, -f * rt, d_s, -tau * kappa + sigma * mu - aff.dtau * aff.dkappa);
    const double a = std::min(1.0, 0.99 * step_length(st));
    if (!(a > 0.0) || !std::isfinite(a)) {
      if (opts.verbose) std::fprintf(stderr, "step failed (%g)\n", a);
      break;
    }

    x += a * st.dx;
    s += a * st.ds;
    z += a * st.dz;
    tau += a * st.dtau;
    kappa += a * st.dkappa;
    if (!x.allFinite() || !s.allFinite() || !z.allFinite() || !(tau > 0.0)) break;
  }

  if (best.x.size() == 0) best = {std::numeric_limits<double>::infinity(), x, z, tau, 0.0, 0.0, 0.0};
  const bool close = best.pres <= 100.0 * tol && best.dres <= 100.0 * tol && best.score <= 100.0 * tol;
  const bool capped = res.iterations >= opts.max_iter;
  finish(close ? SolveStatus::inaccurate : SolveStatus::max_iter, best.x, best.z, best.tau);
  if (capped && !close) res.status = SolveStatus::max_iter;
  res.primal_residual = best.pres;
  res.dual_residual = best.dres;
  res.gap = best.gap;
  res.kkt_residual = best.score;
  return res;
}

/// Solves a complex program by lifting it to real form.
struct ConicResult {
  SolverResult raw;
  ConicSolution solution;
  double objective = 0.0;  // rate_objective^T R (maximized)
};

inline ConicResult solve(const ConicProgram& program, const SolverOptions& opts = {}) {
  const LiftedProgram lp = lift(program);
  ConicResult out;
  out.raw = solve(lp.qcqp, opts);
  out.solution = unlift_solution(lp, out.raw.x);
  out.objective = program.rate_objective.dot(out.solution.rates);
  return out;
}

}  // namespace rscran::conic
