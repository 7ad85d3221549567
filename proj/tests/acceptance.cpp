// Acceptance checks for the whole pipeline. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>

#include "fixtures.hpp"
#include "glioma/experiments.hpp"

using namespace glioma;
using namespace glioma::testing;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit;  // seconds
  std::function<Outcome()> run;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

ScalarField smooth_field(const Grid& g, double base, double amp) {
  ScalarField c(g);
  for (std::size_t v = 0; v < g.size(); ++v) {
    const Eigen::Vector3d x = g.position(v);
    c[v] = base + amp * std::sin(x[0]) * std::cos(x[1]);
  }
  return c;
}

TensorField smooth_K(const Grid& g) {
  TensorField K(g);
  for (std::size_t v = 0; v < g.size(); ++v) {
    const Eigen::Vector3d x = g.position(v);
    Eigen::Matrix3d t = Eigen::Matrix3d::Zero();
    t(0, 0) = 0.10 + 0.03 * std::sin(x[0] + x[1]);
    t(1, 1) = 0.08 + 0.02 * std::cos(x[0]);
    t(0, 1) = t(1, 0) = 0.01 * std::sin(x[1]);
    K.set(v, t);
  }
  return K;
}

Outcome integrator_order() {
  const Grid g = Grid::cube(2, 32, 2.0 * M_PI);
  const ScalarField c0 = smooth_field(g, 0.3, 0.2);
  const TensorField K = TensorField::isotropic(g, 0.1);
  ReactionParams r;
  r.rho = 2.0;
  const CgOptions tight{1e-13, 500};
  auto solve = [&](int nt) {
    const CrankNicolsonDiffusion prop(K, 1.0 / nt, tight);
    return propagate(c0.values(), prop, r.rho, TimeGrid{nt, 1.0}).states.back();
  };
  const Vector ref = solve(40 * 16);
  double err[3];
  const int nts[3] = {10, 20, 40};
  for (int i = 0; i < 3; ++i) err[i] = weighted_norm(g, solve(nts[i]) - ref);
  const double o1 = std::log2(err[0] / err[1]), o2 = std::log2(err[1] / err[2]);
  const bool ok = std::abs(o1 - 2.0) <= 0.3 && std::abs(o2 - 2.0) <= 0.3;
  return {ok, format("errors %.3e %.3e %.3e, observed orders %.3f %.3f (need 2.0 +- 0.3)", err[0], err[1], err[2],
                     o1, o2)};
}

Outcome spatial_accuracy() {
  ReactionParams r;
  r.rho = 2.0;
  auto solve = [&](int n) {
    const Grid g = Grid::cube(2, n, 2.0 * M_PI);
    const CrankNicolsonDiffusion prop(smooth_K(g), 0.1, CgOptions{1e-13, 500});
    return propagate(smooth_field(g, 0.3, 0.2).values(), prop, r.rho, TimeGrid{10, 1.0}).final_state();
  };
  const ScalarField coarse = solve(32), fine = solve(64);
  const Grid& g = coarse.grid();
  double diff = 0.0;
  for (int j = 0; j < 32; ++j) {
    for (int i = 0; i < 32; ++i) {
      diff = std::max(diff, std::abs(coarse[g.index(i, j)] - fine[fine.grid().index(2 * i, 2 * j)]));
    }
  }
  const double rel = diff / coarse.values().cwiseAbs().maxCoeff();
  return {rel < 1e-8, format("max relative change 32^2 -> 64^2 at t=1: %.3e (need < 1e-8)", rel)};
}

Outcome adjoint_exactness() {
  auto s = small_problem(32, 0.2, true);
  const InverseProblem& prob = s.problem;
  std::mt19937_64 rng(2024);
  const Vector p = random_vector(prob.parameters(), rng, 0.2).cwiseAbs();
  const double kf = 0.1;
  const auto prop = make_propagator(prob, kf, Fidelity::Exact);
  const Trajectory base = propagate(prob.phi.apply(p), *prop, prob.reaction.rho, prob.time);
  double worst_t = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector dp = random_vector(prob.parameters(), rng);
    const Vector w = random_vector(static_cast<Eigen::Index>(s.grid.size()), rng);
    const Trajectory tan = propagate_tangent(base, prob.phi.apply(dp), 0.0, *prop, prob.reaction.rho, {});
    const double lhs = weighted_dot(s.grid, prob.mask1.apply(tan.states.back()), w);
    const AdjointTrajectory adj = propagate_adjoint(base, prob.mask1.apply(w), *prop, prob.reaction.rho);
    worst_t = std::max(worst_t, rel_diff(lhs, dp.dot(prob.phi.transpose(adj.states.front()))));
  }
  const Gradient g = gradient(prob, p, kf);
  const double h = 1e-5;
  double worst_g = 0.0;
  for (int j = 0; j <= prob.parameters(); ++j) {
    Vector pp = p, pm = p;
    double kp = kf, km = kf;
    if (j < prob.parameters()) {
      pp[j] += h;
      pm[j] -= h;
    } else {
      kp += h;
      km -= h;
    }
    const double fd = (objective(prob, pp, kp) - objective(prob, pm, km)) / (2 * h);
    worst_g = std::max(worst_g, rel_diff(fd, j < prob.parameters() ? g.p[j] : g.kf));
  }
  return {worst_t < 1e-8 && worst_g < 1e-5,
          format("transpose worst %.2e over 20 pairs (need < 1e-8); gradient FD worst %.2e over %d components "
                 "(need < 1e-5)",
                 worst_t, worst_g, prob.parameters() + 1)};
}

Outcome reduced_hessian() {
  auto s = small_problem(32, 0.2, true);
  const InverseProblem& prob = s.problem;
  const int np = prob.parameters();
  std::mt19937_64 rng(77);
  const Vector p = random_vector(np, rng, 0.2).cwiseAbs();
  double sym = 0.0, psd = 0.0;
  for (HessianMode mode : {HessianMode::GaussNewton, HessianMode::Full}) {
    const Linearization lin(prob, p, 0.1, Fidelity::Exact, mode);
    for (int t = 0; t < 10; ++t) {
      const Vector x = random_vector(np, rng), y = random_vector(np, rng);
      const double xk = random_vector(1, rng)[0], yk = random_vector(1, rng)[0];
      const HessianProduct hx = lin.matvec(x, xk), hy = lin.matvec(y, yk);
      sym = std::max(sym, rel_diff(hx.p.dot(y) + hx.kf * yk, x.dot(hy.p) + xk * hy.kf));
      if (mode == HessianMode::GaussNewton) psd = std::min(psd, hx.p.dot(x) + hx.kf * xk);
    }
  }
  const Linearization lin(prob, p, 0.1);
  const SchurResult r = schur_solve(lin, Preconditioner::surrogate(prob, p, 0.1), CgOptions{1e-10, 200});
  const HessianProduct h = lin.matvec(r.dp, r.dkf);
  const double res = std::sqrt((h.p + lin.gradient().p).squaredNorm() + std::pow(h.kf + lin.gradient().kf, 2)) /
                     lin.gradient().norm();
  return {sym < 1e-7 && psd >= -1e-10 && res < 1e-5,
          format("symmetry worst %.2e (need < 1e-7); GN min x'Hx %.2e (need >= -1e-10); block residual %.2e "
                 "(need < 1e-5)",
                 sym, psd, res)};
}

/// Shared standard problem (case 2, 64^2) so the grid cells are solved once.
struct Standard {
  TestCaseSpec spec = TestCaseSpec::preset(2);
  std::optional<Target> target;
  std::map<std::pair<double, double>, MetricsRow> rows;

  const Target& get_target() {
    if (!target) target = make_target(spec);
    return *target;
  }
  CellResult run(double c_d, double eta, const NewtonOptions& opts, double beta = 0.01) {
    return run_cell(spec, get_target(), c_d, eta, CellOptions{beta, opts});
  }
  const MetricsRow& row(double c_d, double eta) {
    const auto key = std::make_pair(c_d, eta);
    if (!rows.count(key)) rows[key] = run(c_d, eta, NewtonOptions{}).row;
    return rows[key];
  }
};

Standard& standard() {
  static Standard s;
  return s;
}

Outcome preconditioner_effect() {
  NewtonOptions with, without;
  with.warm_start = without.warm_start = false;
  without.precondition = false;
  const CellResult a = standard().run(0.2, 0.05, with), b = standard().run(0.2, 0.05, without);
  const double ca = a.state.mean_cg_iterations(2), cb = b.state.mean_cg_iterations(2);
  return {ca <= cb / 3.0 && a.state.status == NewtonStatus::Converged,
          format("mean CG per Newton step %.1f preconditioned vs %.1f unpreconditioned, ratio %.2f (need >= 3)", ca,
                 cb, cb / ca)};
}

Outcome warm_start_effect() {
  NewtonOptions cold;
  cold.warm_start = false;
  const CellResult w = standard().run(0.2, 0.05, NewtonOptions{}), c = standard().run(0.2, 0.05, cold);
  standard().rows[{0.2, 0.05}] = w.row;
  const int iw = w.state.newton_iterations(2), ic = c.state.newton_iterations(2);
  return {2 * iw <= ic && w.state.status == NewtonStatus::Converged,
          format("phase-2 Newton iterations %d warm vs %d cold (need warm <= cold / 2); warm phase-1 iterations %d",
                 iw, ic, w.state.newton_iterations(1))};
}

Outcome inverse_crime() {
  TestCaseSpec spec = TestCaseSpec::preset(1);
  spec.inverse_crime = true;
  const Target t = make_target(spec);
  const CellResult r = run_cell(spec, t, 0.0, 0.0, CellOptions{1e-6, NewtonOptions{}});
  const double ji_support = jaccard(margin(r.recon[0], 1.0), margin(t.c0, 1.0));
  return {r.row.eps[0] < 1e-2 && r.row.ji[0] > 0.99,
          format("eps_0 %.3e (need < 1e-2), JI_0 %.4f (need > 0.99; margin empty at c_d = 0), support JI %.4f, %s",
                 r.row.eps[0], r.row.ji[0], ji_support, r.row.status.c_str())};
}

Outcome kf_identifiability() {
  double worst = 0.0;
  std::string cells;
  for (double c_d : {0.2, 0.3}) {
    for (double eta : {0.01, 0.05, 0.10}) {
      const MetricsRow& row = standard().row(c_d, eta);
      const double e = row.missing || !row.eps_kf ? INFINITY : *row.eps_kf;
      worst = std::max(worst, e);
      cells += format(" %.2f", e);
    }
  }
  return {worst < 0.15, format("eps_kf over c_d {0.2,0.3} x eta {0.01,0.05,0.10}:%s (need < 0.15)", cells.c_str())};
}

Outcome trends() {
  Standard& s = standard();
  int below = 0, total = 0, bad_slices = 0;
  std::string detail;
  for (double c_d : s.spec.c_d_list) {
    for (double eta : s.spec.eta_list) {
      const MetricsRow& row = s.row(c_d, eta);
      if (row.missing) return {false, format("cell c_d=%.2f eta=%.2f failed: %s", c_d, eta, row.note.c_str())};
      ++total;
      below += row.eps[1] <= row.eps[0];
    }
  }
  for (double eta : s.spec.eta_list) {
    std::vector<double> x, y;
    for (double c_d : s.spec.c_d_list) {
      x.push_back(c_d);
      y.push_back(s.row(c_d, eta).eps[0]);
    }
    const double rho = spearman(x, y);
    bad_slices += rho < 0.0;
    detail += format(" eta=%.2f:%.2f", eta, rho);
  }
  for (double c_d : s.spec.c_d_list) {
    std::vector<double> x, y;
    for (double eta : s.spec.eta_list) {
      x.push_back(eta);
      y.push_back(s.row(c_d, eta).eps[0]);
    }
    const double rho = spearman(x, y);
    bad_slices += rho < 0.0;
    detail += format(" cd=%.2f:%.2f", c_d, rho);
  }
  const double frac = static_cast<double>(below) / total;
  return {bad_slices == 0 && frac >= 0.75,
          format("Spearman(eps_0) per slice%s (need >= 0); eps_1 <= eps_0 in %d/%d cells (need >= 75%%)",
                 detail.c_str(), below, total)};
}

Outcome multifocal() {
  const TestCaseSpec spec = TestCaseSpec::preset(3);
  const CellResult r = run_cell(spec, make_target(spec), 0.2, 0.05, CellOptions{});
  return {r.state.status == NewtonStatus::Converged && r.row.ji[0] >= 0.6,
          format("status %s, JI_0 %.3f (need >= 0.6), eps_0 %.3e, eps_kf %.3e", r.row.status.c_str(), r.row.ji[0],
                 r.row.eps[0], r.row.eps_kf.value_or(NAN))};
}

Outcome lcurve_choice() {
  Standard& s = standard();
  const InverseProblem prob = cell_problem(s.spec, s.get_target(), 0.2, 0.05, 0.01);
  const LCurve curve = lcurve(prob, {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0});
  bool monotone = true;
  std::string pts;
  const LCurvePoint* prev = nullptr;
  for (const auto& pt : curve.points) {
    pts += format(" (%.0e: %.3e, %.3e%s)", pt.beta, pt.misfit, pt.p_norm, pt.valid ? "" : " invalid");
    if (!pt.valid) continue;
    if (prev) monotone = monotone && pt.misfit >= prev->misfit * (1 - 1e-9) && pt.p_norm <= prev->p_norm * (1 + 1e-9);
    prev = &pt;
  }
  if (!curve.corner) return {false, "no corner;" + pts};
  const double beta = curve.chosen_beta();
  const bool near = std::abs(std::log10(beta) + 2.0) <= 1.0 + 1e-9;
  return {monotone && near, format("monotone %s, chosen beta %.0e (need within one decade of 1e-2);%s",
                                   monotone ? "yes" : "no", beta, pts.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "integrator order", 10, integrator_order},
      {2, "spectral spatial accuracy", 10, spatial_accuracy},
      {3, "adjoint exactness", 60, adjoint_exactness},
      {4, "reduced Hessian", 120, reduced_hessian},
      {5, "preconditioner effect", 600, preconditioner_effect},
      {6, "warm start effect", 900, warm_start_effect},
      {7, "inverse-crime recovery", 300, inverse_crime},
      {8, "k_f identifiability", 1200, kf_identifiability},
      {9, "trend reproduction", 2700, trends},
      {10, "multifocal", 600, multifocal},
      {11, "L-curve", 1800, lcurve_choice},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs <= c.time_limit;
    failed += !pass;
    std::printf("%s  %2d %s: %s [%.1f s, limit %.0f s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.time_limit);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
