#pragma once

#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rscran/conic/solver.hpp"

namespace rscran::conic {

/// Writes the cone form of `qcqp` (minimize c^T x s.t. h - G x in K) in Conic Benchmark
/// Format version 3. Orthant rows come first (one L+ block), followed by one Q block per
/// quadratic constraint, so the file can be cross-checked with any CBF-reading solver.
inline void write_cbf(std::ostream& os, const RealQcqp& qcqp) {
  const detail::ConeProblem p(qcqp);
  const int n = p.n();
  const int m = p.m();
  os << std::setprecision(17);
  os << "# rscran conic program: " << qcqp.constraints.size() << " constraints, " << qcqp.nonnegative.size()
     << " nonnegative variables\n";
  os << "VER\n3\n\n";
  os << "OBJSENSE\nMIN\n\n";
  os << "VAR\n" << n << " 1\nF " << n << "\n\n";

  const int cones = (p.num_lp() > 0 ? 1 : 0) + static_cast<int>(p.soc().size());
  os << "CON\n" << m << " " << cones << "\n";
  if (p.num_lp() > 0) os << "L+ " << p.num_lp() << "\n";
  for (const auto& soc : p.soc()) os << "Q " << soc.dim << "\n";
  os << "\n";

  std::vector<std::string> obj;
  for (int j = 0; j < n; ++j)
    if (p.c()[j] != 0.0) {
      std::ostringstream line;
      line << std::setprecision(17) << j << " " << p.c()[j];
      obj.push_back(line.str());
    }
  if (!obj.empty()) {
    os << "OBJACOORD\n" << obj.size() << "\n";
    for (const auto& l : obj) os << l << "\n";
    os << "\n";
  }

  std::vector<std::string> acoord;
  VectorXd e = VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    const VectorXd col = p.G(e);
    e[j] = 0.0;
    for (int i = 0; i < m; ++i)
      if (col[i] != 0.0) {
        std::ostringstream line;
        line << std::setprecision(17) << i << " " << j << " " << -col[i];
        acoord.push_back(line.str());
      }
  }
  os << "ACOORD\n" << acoord.size() << "\n";
  for (const auto& l : acoord) os << l << "\n";
  os << "\n";

  std::vector<std::string> bcoord;
  for (int i = 0; i < m; ++i)
    if (p.h()[i] != 0.0) {
      std::ostringstream line;
      line << std::setprecision(17) << i << " " << p.h()[i];
      bcoord.push_back(line.str());
    }
  os << "BCOORD\n" << bcoord.size() << "\n";
  for (const auto& l : bcoord) os << l << "\n";
}

}  // namespace rscran::conic
