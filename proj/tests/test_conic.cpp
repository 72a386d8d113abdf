#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "rscran/conic/cbf.hpp"
#include "rscran/conic/program.hpp"
#include "rscran/conic/solver.hpp"

using namespace rscran;
using namespace rscran::conic;

namespace {

RealConstraint linear_constraint(std::vector<std::pair<int, double>> a, double b) {
  RealConstraint c;
  c.linear = std::move(a);
  c.constant = b;
  return c;
}

// Reference solver for small problems: log-barrier Newton method with a backtracking line
// search, started from a strictly feasible grid point. Shares no code with the cone solver.
struct BarrierOracle {
  const RealQcqp& q;

  double phi(const VectorXd& x, double t) const {
    double v = t * q.cost.dot(x);
    for (const auto& c : q.constraints) {
      const double g = c.evaluate(x);
      if (g >= 0.0) return std::numeric_limits<double>::infinity();
      v -= std::log(-g);
    }
    for (int j : q.nonnegative) {
      if (x[j] <= 0.0) return std::numeric_limits<double>::infinity();
      v -= std::log(x[j]);
    }
    return v;
  }

  VectorXd run(VectorXd x) const {
    const int n = q.num_vars;
    for (double t = 1.0; t < 1e11; t *= 4.0) {
      for (int it = 0; it < 200; ++it) {
        VectorXd g = t * q.cost;
        MatrixXd H = MatrixXd::Zero(n, n);
        for (const auto& c : q.constraints) {
          const double gv = c.evaluate(x);
          const VectorXd gr = c.gradient(x);
          MatrixXd hc = MatrixXd::Zero(n, n);
          for (const auto& qb : c.quad) {
            const auto d = qb.factor.cols();
            hc.block(qb.offset, qb.offset, d, d) += 2.0 * qb.factor.transpose() * qb.factor;
          }
          g += gr / (-gv);
          H += gr * gr.transpose() / (gv * gv) + hc / (-gv);
        }
        for (int j : q.nonnegative) {
          g[j] -= 1.0 / x[j];
          H(j, j) += 1.0 / (x[j] * x[j]);
        }
        H.diagonal().array() += 1e-14;
        const VectorXd dx = -H.ldlt().solve(g);
        const double dec = -g.dot(dx);
        if (dec < 1e-14) break;
        double step = 1.0;
        const double f0 = phi(x, t);
        while (phi(x + step * dx, t) > f0 - 0.25 * step * dec && step > 1e-16) step *= 0.5;
        x += step * dx;
      }
    }
    return x;
  }
};

// Random instance: maximize R subject to R <= concave quadratic pieces of x and a ball on x.
RealQcqp random_minimax(std::mt19937_64& gen, int dim, int pieces) {
  std::normal_distribution<double> nd;
  RealQcqp q;
  q.num_vars = dim + 1;
  q.cost = VectorXd::Zero(dim + 1);
  q.cost[dim] = -1.0;
  q.nonnegative = {dim};
  for (int i = 0; i < pieces; ++i) {
    RealConstraint c;
    MatrixXd f(dim, dim);
    for (int r = 0; r < dim; ++r)
      for (int k = 0; k < dim; ++k) f(r, k) = nd(gen) * 0.7;
    c.quad.push_back({0, f});
    for (int k = 0; k < dim; ++k) c.linear.emplace_back(k, nd(gen));
    c.linear.emplace_back(dim, 1.0);
    c.constant = -3.0 - std::abs(nd(gen));
    q.constraints.push_back(std::move(c));
  }
  RealConstraint ball;
  ball.quad.push_back({0, MatrixXd::Identity(dim, dim)});
  ball.constant = -2.0;
  q.constraints.push_back(std::move(ball));
  return q;
}

}  // namespace

TEST(ConicSolver, DegenerateLinearProgram) {
  RealQcqp q;
  q.num_vars = 1;
  q.cost = VectorXd::Constant(1, -1.0);
  q.nonnegative = {0};
  q.constraints.push_back(linear_constraint({{0, 1.0}}, -3.0));
  const auto r = solve(q);
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_NEAR(r.x[0], 3.0, 1e-6);
  EXPECT_NEAR(r.multipliers[0], 1.0, 1e-6);
}

TEST(ConicSolver, ParabolaVertex) {
  // maximize R s.t. R <= 1 - (x-1)^2, x^2 <= 4
  RealQcqp q;
  q.num_vars = 2;
  q.cost = VectorXd::Zero(2);
  q.cost[1] = -1.0;
  q.nonnegative = {1};
  RealConstraint para;
  para.quad.push_back({0, MatrixXd::Identity(1, 1)});
  para.linear = {{0, -2.0}, {1, 1.0}};
  para.constant = 0.0;
  q.constraints.push_back(para);
  RealConstraint box;
  box.quad.push_back({0, MatrixXd::Identity(1, 1)});
  box.constant = -4.0;
  q.constraints.push_back(box);
  const auto r = solve(q);
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_NEAR(r.x[1], 1.0, 1e-6);
  EXPECT_NEAR(r.x[0], 1.0, 1e-3);
  EXPECT_LE(q.max_violation(r.x), 1e-7 * 5.0);
}

TEST(ConicSolver, BallMaximizesLinearCost) {
  // minimize c^T x s.t. ||x||^2 <= 9 -> x = -3 c/|c|
  RealQcqp q;
  q.num_vars = 3;
  q.cost = VectorXd(3);
  q.cost << 1.0, -2.0, 2.0;
  RealConstraint ball;
  ball.quad.push_back({0, MatrixXd::Identity(3, 3)});
  ball.constant = -9.0;
  q.constraints.push_back(ball);
  const auto r = solve(q);
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_NEAR(r.objective, -9.0, 1e-6);
  // multiplier y with c + 2 y x = 0 -> y = |c| / 6
  EXPECT_NEAR(r.multipliers[0], 0.5, 1e-5);
}

TEST(ConicSolver, DetectsInfeasibility) {
  RealQcqp q;
  q.num_vars = 2;
  q.cost = VectorXd::Ones(2);
  RealConstraint ball;
  ball.quad.push_back({0, MatrixXd::Identity(2, 2)});
  ball.constant = -1.0;
  q.constraints.push_back(ball);
  q.constraints.push_back(linear_constraint({{0, -1.0}}, 5.0));  // x0 >= 5
  const auto r = solve(q);
  EXPECT_EQ(r.status, SolveStatus::infeasible);
}

TEST(ConicSolver, DetectsUnboundedness) {
  RealQcqp q;
  q.num_vars = 2;
  q.cost = VectorXd::Zero(2);
  q.cost[1] = -1.0;
  q.nonnegative = {1};
  q.constraints.push_back(linear_constraint({{0, 1.0}}, -1.0));
  const auto r = solve(q);
  EXPECT_EQ(r.status, SolveStatus::unbounded);
}

TEST(ConicSolver, MeritNonIncreasing) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto q = random_minimax(gen, 4, 3);
    const auto r = solve(q);
    ASSERT_EQ(r.status, SolveStatus::optimal);
    for (std::size_t i = 1; i < r.merit.size(); ++i) EXPECT_LE(r.merit[i], r.merit[i - 1] * (1.0 + 1e-9) + 1e-12);
  }
}

TEST(ConicSolver, AgreesWithBarrierOracleOnRandomQcqps) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const int dim = 1 + trial % 5;
    const auto q = random_minimax(gen, dim, 1 + trial % 3);
    const auto r = solve(q);
    ASSERT_EQ(r.status, SolveStatus::optimal) << "trial " << trial;
    EXPECT_LE(q.max_violation(r.x), 1e-7 * 10.0);

    VectorXd x0 = VectorXd::Zero(q.num_vars);
    x0[dim] = 1e-3;
    BarrierOracle oracle{q};
    const VectorXd xo = oracle.run(x0);
    const double fo = q.cost.dot(xo);
    EXPECT_NEAR(r.objective, fo, 1e-4 * std::max(1.0, std::abs(fo))) << "trial " << trial;
  }
}

TEST(ConicSolver, GridSearchNeverBeatsSolver) {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 10; ++trial) {
    const auto q = random_minimax(gen, 2, 3);
    const auto r = solve(q);
    ASSERT_EQ(r.status, SolveStatus::optimal);
    // For fixed x the best R is min over pieces; scan x on a fine grid of the ball.
    double best = -std::numeric_limits<double>::infinity();
    const int g = 400;
    const double rad = std::sqrt(2.0);
    for (int i = 0; i <= g; ++i)
      for (int j = 0; j <= g; ++j) {
        VectorXd x(3);
        x << -rad + 2.0 * rad * i / g, -rad + 2.0 * rad * j / g, 0.0;
        if (x.head(2).squaredNorm() > 2.0) continue;
        double rate = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c + 1 < q.constraints.size(); ++c) rate = std::min(rate, -q.constraints[c].evaluate(x));
        best = std::max(best, std::max(rate, 0.0));
      }
    EXPECT_GE(-r.objective, best - 1e-6);
    EXPECT_LE(-r.objective, best + 0.05 * std::max(1.0, best));
  }
}

TEST(ConicSolver, Deterministic) {
  std::mt19937_64 gen(5);
  const auto q = random_minimax(gen, 5, 3);
  const auto a = solve(q);
  const auto b = solve(q);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_TRUE(a.x == b.x);
}

TEST(ConicSolver, NesterovToddScalingIdentity) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  RealQcqp q;
  q.num_vars = 3;
  q.cost = VectorXd::Zero(3);
  RealConstraint c;
  c.quad.push_back({0, MatrixXd::Identity(3, 3)});
  q.constraints.push_back(c);
  q.nonnegative = {0};
  const detail::ConeProblem p(q);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd s(p.m()), z(p.m());
    for (int i = 0; i < p.m(); ++i) {
      s[i] = nd(gen);
      z[i] = nd(gen);
    }
    s[0] = std::abs(s[0]) + 0.1;
    z[0] = std::abs(z[0]) + 0.1;
    s[1] = s.tail(p.m() - 2).norm() + 1.0 + std::abs(nd(gen));
    z[1] = z.tail(p.m() - 2).norm() + 1.0 + std::abs(nd(gen));
    detail::ConeScaling sc;
    ASSERT_TRUE(detail::compute_scaling(p, s, z, sc));
    const VectorXd wz = detail::apply_W(p, sc, z, false);
    const VectorXd wis = detail::apply_W(p, sc, s, true);
    EXPECT_LE((wz - wis).norm(), 1e-10 * (1.0 + wz.norm()));
    EXPECT_LE((wz - sc.lambda).norm(), 1e-10 * (1.0 + wz.norm()));
    const VectorXd round = detail::apply_W(p, sc, detail::apply_W(p, sc, s, false), true);
    EXPECT_LE((round - s).norm(), 1e-10 * (1.0 + s.norm()));
  }
}

TEST(ConicSolver, JordanDivideInvertsProduct) {
  RealQcqp q;
  q.num_vars = 2;
  q.cost = VectorXd::Zero(2);
  RealConstraint c;
  c.quad.push_back({0, MatrixXd::Identity(2, 2)});
  q.constraints.push_back(c);
  const detail::ConeProblem p(q);
  VectorXd lam(4), v(4);
  lam << 3.0, 0.5, -1.0, 0.7;
  v << 0.3, -2.0, 1.5, 0.1;
  VectorXd prod;
  detail::jordan_product(p, lam, detail::jordan_divide(p, lam, v), prod);
  EXPECT_LE((prod - v).norm(), 1e-12);
}

TEST(ConicProgramLift, RoundTripIsExact) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd;
  auto rc = [&] { return cdouble(nd(gen), nd(gen)); };
  ConicProgram p;
  p.block_dims = {2, 3};
  p.num_rates = 2;
  p.rate_objective = VectorXd::Ones(2);
  for (int k = 0; k < 3; ++k) {
    ConicConstraint c;
    for (int b = 0; b < 2; ++b) {
      MatrixXcd f(2, p.block_dims[b]);
      for (int i = 0; i < f.size(); ++i) f(i) = rc();
      c.quad.push_back({b, f});
      VectorXcd a(p.block_dims[b]);
      for (int i = 0; i < a.size(); ++i) a[i] = rc();
      c.linear.push_back({b, a});
    }
    c.rate_terms = {{k % 2, 0.69}};
    c.constant = nd(gen);
    c.label = "c" + std::to_string(k);
    c.role = ConstraintRole::rate;
    p.constraints.push_back(c);
  }
  const auto back = unlift(lift(p));
  ASSERT_EQ(back.block_dims, p.block_dims);
  ASSERT_EQ(back.num_rates, p.num_rates);
  EXPECT_TRUE(back.rate_objective == p.rate_objective);
  ASSERT_EQ(back.constraints.size(), p.constraints.size());
  for (std::size_t i = 0; i < p.constraints.size(); ++i) {
    const auto& a = p.constraints[i];
    const auto& b = back.constraints[i];
    EXPECT_EQ(a.constant, b.constant);
    EXPECT_EQ(a.label, b.label);
    EXPECT_EQ(a.role, b.role);
    EXPECT_EQ(a.rate_terms, b.rate_terms);
    ASSERT_EQ(a.quad.size(), b.quad.size());
    for (std::size_t t = 0; t < a.quad.size(); ++t) {
      EXPECT_EQ(a.quad[t].block, b.quad[t].block);
      EXPECT_TRUE(a.quad[t].factor == b.quad[t].factor);
    }
    ASSERT_EQ(a.linear.size(), b.linear.size());
    for (std::size_t t = 0; t < a.linear.size(); ++t) EXPECT_TRUE(a.linear[t].coeff == b.linear[t].coeff);
  }
}

TEST(ConicProgramLift, LiftedFormsMatchComplexValues) {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> nd;
  auto rc = [&] { return cdouble(nd(gen), nd(gen)); };
  ConicProgram p;
  p.block_dims = {3};
  p.num_rates = 1;
  p.rate_objective = VectorXd::Ones(1);
  ConicConstraint c;
  MatrixXcd f(2, 3);
  for (int i = 0; i < f.size(); ++i) f(i) = rc();
  VectorXcd a(3);
  for (int i = 0; i < 3; ++i) a[i] = rc();
  c.quad.push_back({0, f});
  c.linear.push_back({0, a});
  c.rate_terms = {{0, 2.0}};
  c.constant = 0.5;
  p.constraints.push_back(c);
  const auto lp = lift(p);
  VectorXcd w(3);
  for (int i = 0; i < 3; ++i) w[i] = rc();
  ConicSolution sol{{w}, VectorXd::Constant(1, 0.3)};
  const VectorXd x = lift_solution(lp, sol);
  const double expected = (f * w).squaredNorm() + std::real(a.dot(w)) + 2.0 * 0.3 + 0.5;
  EXPECT_NEAR(lp.qcqp.constraints[0].evaluate(x), expected, 1e-12);
  const auto back = unlift_solution(lp, x);
  EXPECT_TRUE(back.blocks[0] == w);
}

TEST(ConicProgramSolve, ComplexPowerConstrainedRate) {
  // maximize R s.t. R <= 2 Re{h^H w} - ||w||^2 ... with ||w||^2 <= 1: optimum w = h/|h| when |h| > 1
  ConicProgram p;
  p.block_dims = {2};
  p.num_rates = 1;
  p.rate_objective = VectorXd::Ones(1);
  VectorXcd h(2);
  h << cdouble(1.0, 1.0), cdouble(0.5, -2.0);
  ConicConstraint rate;
  rate.quad.push_back({0, MatrixXcd::Identity(2, 2)});
  rate.linear.push_back({0, -2.0 * h});
  rate.rate_terms = {{0, 1.0}};
  p.constraints.push_back(rate);
  ConicConstraint power;
  power.quad.push_back({0, MatrixXcd::Identity(2, 2)});
  power.constant = -1.0;
  p.constraints.push_back(power);
  const auto r = solve(p);
  ASSERT_EQ(r.raw.status, SolveStatus::optimal);
  EXPECT_NEAR(r.objective, 2.0 * h.norm() - 1.0, 1e-6);
  EXPECT_LE((r.solution.blocks[0] - h / h.norm()).norm(), 1e-3);
}

TEST(ConicCbf, DumpReproducesConeData) {
  std::mt19937_64 gen(21);
  const auto q = random_minimax(gen, 3, 2);
  std::ostringstream os;
  write_cbf(os, q);
  std::istringstream is(os.str());
  const detail::ConeProblem p(q);
  MatrixXd A = MatrixXd::Zero(p.m(), p.n());
  VectorXd b = VectorXd::Zero(p.m());
  VectorXd c = VectorXd::Zero(p.n());
  std::string key;
  int cones = 0;
  while (is >> key) {
    if (key == "#") {
      std::getline(is, key);
    } else if (key == "VER") {
      int v = 0;
      is >> v;
      EXPECT_EQ(v, 3);
    } else if (key == "CON") {
      int rows = 0;
      is >> rows >> cones;
      EXPECT_EQ(rows, p.m());
      for (int i = 0; i < cones; ++i) {
        std::string kind;
        int d = 0;
        is >> kind >> d;
        EXPECT_TRUE(kind == "L+" || kind == "Q");
      }
    } else if (key == "OBJACOORD") {
      int nnz = 0;
      is >> nnz;
      for (int k = 0; k < nnz; ++k) {
        int j = 0;
        double v = 0;
        is >> j >> v;
        c[j] = v;
      }
    } else if (key == "ACOORD") {
      int nnz = 0;
      is >> nnz;
      for (int k = 0; k < nnz; ++k) {
        int i = 0, j = 0;
        double v = 0;
        is >> i >> j >> v;
        A(i, j) = v;
      }
    } else if (key == "BCOORD") {
      int nnz = 0;
      is >> nnz;
      for (int k = 0; k < nnz; ++k) {
        int i = 0;
        double v = 0;
        is >> i >> v;
        b[i] = v;
      }
    }
  }
  EXPECT_EQ(cones, 1 + 3);  // orthant block, two pieces, ball
  EXPECT_TRUE(c == q.cost);
  EXPECT_TRUE(b == p.h());
  VectorXd x(p.n());
  for (int j = 0; j < p.n(); ++j) x[j] = 0.1 * (j + 1);
  EXPECT_LE((A * x + p.G(x)).norm(), 1e-12);
}
