#pragma once

#include <cmath>

#include "glioma/field.hpp"

namespace glioma {

struct CgOptions {
  double tol = 1e-10;  // relative residual ||r|| / ||b||
  int max_iters = 500;
};

struct CgResult {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

/// Preconditioned conjugate gradients for a symmetric positive definite operator.
/// `apply(x)` returns A x, `precondition(r)` returns M^{-1} r. `x` holds the initial guess.
template <typename Apply, typename Precondition>
CgResult pcg(Apply&& apply, Precondition&& precondition, const Vector& b, Vector& x, const CgOptions& opts) {
  CgResult res;
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    x.setZero(b.size());
    res.converged = true;
    return res;
  }
  Vector r = b - apply(x);
  res.rel_residual = r.norm() / bnorm;
  if (res.rel_residual <= opts.tol) {
    res.converged = true;
    return res;
  }
  Vector z = precondition(r);
  Vector p = z;
  double rz = r.dot(z);
  for (int it = 1; it <= opts.max_iters; ++it) {
    const Vector Ap = apply(p);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0) || !std::isfinite(pAp)) {
      res.iterations = it;
      return res;  // breakdown: operator not SPD along p
    }
    const double step = rz / pAp;
    x += step * p;
    r -= step * Ap;
    res.iterations = it;
    res.rel_residual = r.norm() / bnorm;
    if (res.rel_residual <= opts.tol) {
      res.converged = true;
      return res;
    }
    z = precondition(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  return res;
}

}  // namespace glioma
