#include "glioma/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "glioma/errors.hpp"

namespace glioma {

namespace {

double gaussian(const Eigen::Vector3d& x, const Eigen::Vector3d& center, double sigma) {
  return std::exp(-(x - center).squaredNorm() / (2.0 * sigma * sigma));
}

}  // namespace

void GaussianBasis::validate(const Grid& grid) const {
  if (centers.empty()) throw ConfigError("basis: n_p must be at least 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("basis: sigma must be positive");
  for (const auto& c : centers) {
    for (int a = 0; a < grid.dim(); ++a) {
      if (!(c[a] >= grid.origin(a) && c[a] <= grid.origin(a) + grid.extent(a))) {
        throw ConfigError("basis: center outside the domain");
      }
    }
    for (int a = grid.dim(); a < 3; ++a) {
      if (c[a] != 0.0) throw ConfigError("basis: center has a coordinate beyond the grid dimension");
    }
  }
}

GaussianBasis GaussianBasis::lattice(const ObservationMask& support, int per_axis, int dilation, double width_factor) {
  const Grid& g = support.grid();
  if (per_axis < 1) throw ConfigError("basis: per_axis must be at least 1");
  if (support.count() == 0) throw ConfigError("basis: observed region at t = 0 is empty; lower c_d");
  std::array<int, 3> lo{g.n(0), g.n(1), g.n(2)};
  std::array<int, 3> hi{-1, -1, -1};
  for (std::size_t v = 0; v < g.size(); ++v) {
    if (!support[v]) continue;
    const auto s = g.subscripts(v);
    for (int a = 0; a < g.dim(); ++a) {
      lo[a] = std::min(lo[a], s[a]);
      hi[a] = std::max(hi[a], s[a]);
    }
  }
  GaussianBasis basis;
  std::array<std::vector<double>, 3> axes;
  double spacing_sum = 0.0;
  for (int a = 0; a < g.dim(); ++a) {
    const double x0 = g.origin(a) + g.spacing(a) * std::max(lo[a] - dilation, 0);
    const double x1 = g.origin(a) + g.spacing(a) * std::min(hi[a] + dilation, g.n(a) - 1);
    const double step = (x1 - x0) / per_axis;
    for (int i = 0; i < per_axis; ++i) axes[a].push_back(x0 + (i + 0.5) * step);
    spacing_sum += step;
  }
  for (int a = g.dim(); a < 3; ++a) axes[a] = {0.0};
  for (double z : axes[2]) {
    for (double y : axes[1]) {
      for (double x : axes[0]) basis.centers.emplace_back(x, y, z);
    }
  }
  basis.sigma = width_factor * spacing_sum / g.dim();
  if (!(basis.sigma > 0.0)) throw ConfigError("basis: observed region is a single voxel wide; cannot size the basis");
  return basis;
}

ScalarField basis_apply(const GaussianBasis& basis, const Grid& grid, const Vector& p) {
  return ScalarField(grid, Parametrization(grid, basis).apply(p));
}

Vector basis_apply_transpose(const GaussianBasis& basis, const ScalarField& f) {
  return Parametrization(f.grid(), basis).transpose(f.values());
}

Parametrization::Parametrization(const Grid& grid, GaussianBasis basis) : grid_(grid), basis_(std::move(basis)) {
  basis_.validate(grid_);
  phi_.resize(static_cast<Eigen::Index>(grid_.size()), basis_.size());
  for (std::size_t v = 0; v < grid_.size(); ++v) {
    const Eigen::Vector3d x = grid_.position(v);
    for (int j = 0; j < basis_.size(); ++j) {
      phi_(static_cast<Eigen::Index>(v), j) = gaussian(x, basis_.centers[static_cast<std::size_t>(j)], basis_.sigma);
    }
  }
}

Vector Parametrization::apply(const Vector& p) const {
  if (p.size() != size()) throw ConfigError("basis_apply: expected " + std::to_string(size()) + " coefficients");
  return phi_ * p;
}

Vector Parametrization::transpose(const Vector& f) const {
  if (f.size() != phi_.rows()) throw ConfigError("basis_apply_transpose: field size mismatch");
  return grid_.cell_volume() * (phi_.transpose() * f);
}

void InverseProblem::validate() const {
  const Grid& g = grid();
  require_same_grid(g, d1.grid(), "inverse problem d1");
  require_same_grid(g, mask0.grid(), "inverse problem mask0");
  require_same_grid(g, mask1.grid(), "inverse problem mask1");
  require_same_grid(g, tissue.grid(), "inverse problem anatomy");
  require_same_grid(g, phi.grid(), "inverse problem basis");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta: must be nonnegative");
  if (!(k_f >= 0.0) || !std::isfinite(k_f)) throw ConfigError("k_f: must be nonnegative");
  reaction.validate();
  time.validate();
  require_finite(g, d0.values(), "d0");
  require_finite(g, d1.values(), "d1");
}

InverseProblem make_inverse_problem(const Anatomy& anatomy, const DiffusionParams& diffusion,
                                    const ReactionParams& reaction, const TimeGrid& time, const ScalarField& d0,
                                    const ScalarField& d1, const ObservationMask& mask0,
                                    const ObservationMask& mask1, const GaussianBasis& basis, double beta,
                                    bool invert_kf) {
  diffusion.validate();
  InverseProblem prob;
  prob.d0 = observe(mask0, d0);
  prob.d1 = observe(mask1, d1);
  prob.mask0 = mask0;
  prob.mask1 = mask1;
  prob.beta = beta;
  prob.tissue = anatomy.tissue;
  prob.coeffs = diffusion_coefficients(anatomy.tissue, build_tensor(anatomy.dti, diffusion.tensor_mode), diffusion);
  prob.k_f = diffusion.k_f;
  prob.reaction = reaction;
  prob.time = time;
  prob.invert_kf = invert_kf;
  prob.phi = Parametrization(d0.grid(), basis);
  prob.validate();
  return prob;
}

std::unique_ptr<DiffusionPropagator> make_propagator(const InverseProblem& problem, double k_f, Fidelity fidelity) {
  const double dt = problem.time.dt();
  if (fidelity == Fidelity::Surrogate) {
    return std::make_unique<SpectralDiffusion>(SpectralDiffusion::averaged(problem.coeffs, problem.tissue, k_f, dt));
  }
  return std::make_unique<CrankNicolsonDiffusion>(problem.coeffs, k_f, dt, problem.diffusion_cg);
}

namespace {

struct Residuals {
  Vector r0, r1;
  double value = 0.0;  // misfit part of J
};

Residuals residuals(const InverseProblem& problem, const Vector& c0, const Vector& c1) {
  const Grid& g = problem.grid();
  Residuals r;
  r.r0 = problem.mask0.apply(c0) - problem.d0.values();
  r.r1 = problem.mask1.apply(c1) - problem.d1.values();
  r.value = 0.5 * (weighted_dot(g, r.r0, r.r0) + weighted_dot(g, r.r1, r.r1));
  return r;
}

}  // namespace

Linearization::Linearization(const InverseProblem& problem, Vector p, double k_f, Fidelity fidelity,
                             HessianMode mode)
    : problem_(&problem), p_(std::move(p)), k_f_(problem.invert_kf ? k_f : problem.k_f), mode_(mode) {
  if (p_.size() != problem.parameters()) throw ConfigError("linearization: parameter vector has the wrong length");
  propagator_ = make_propagator(problem, k_f_, fidelity);
  const double rho = problem.reaction.rho;
  base_ = propagate(problem.phi.apply(p_), *propagator_, rho, problem.time);
  const Residuals r = residuals(problem, base_.states.front(), base_.states.back());
  misfit_ = r.value;
  objective_ = misfit_ + 0.5 * problem.beta * p_.squaredNorm();
  adjoint_ = propagate_adjoint(base_, -problem.mask1.apply(r.r1), *propagator_, rho);
  terms_ = second_order_terms(base_, adjoint_, *propagator_, rho, mode_, problem.invert_kf);
  gradient_.p = problem.beta * p_ + problem.phi.transpose(problem.mask0.apply(r.r0) - adjoint_.states.front());
  gradient_.kf = problem.invert_kf ? kf_gradient(adjoint_, terms_.sources, propagator_->weight()) : 0.0;
  if (!std::isfinite(objective_) || !gradient_.p.allFinite() || !std::isfinite(gradient_.kf)) {
    throw NumericalError("linearization: non-finite objective or gradient");
  }
}

HessianProduct Linearization::matvec(const Vector& dp, double dkf) const {
  const InverseProblem& prob = *problem_;
  if (dp.size() != prob.parameters()) throw ConfigError("hessian matvec: direction has the wrong length");
  if (!prob.invert_kf) dkf = 0.0;
  const double rho = prob.reaction.rho;
  const Vector dc0 = prob.phi.apply(dp);
  const Trajectory tangent = propagate_tangent(base_, dc0, dkf, *propagator_, rho, terms_.sources);
  const IncrementalAdjoint inc =
      incremental_adjoint(base_, adjoint_, tangent, dkf, prob.mask1, *propagator_, rho, terms_);
  HessianProduct out;
  out.p = prob.beta * dp + prob.phi.transpose(prob.mask0.apply(dc0) - inc.adjoint.states.front());
  out.kf = prob.invert_kf ? inc.kf_term : 0.0;
  return out;
}

double objective(const InverseProblem& problem, const Vector& p, double k_f, Fidelity fidelity) {
  if (p.size() != problem.parameters()) throw ConfigError("objective: parameter vector has the wrong length");
  const double kf = problem.invert_kf ? k_f : problem.k_f;
  const auto prop = make_propagator(problem, kf, fidelity);
  const Trajectory traj = propagate(problem.phi.apply(p), *prop, problem.reaction.rho, problem.time);
  const double J = residuals(problem, traj.states.front(), traj.states.back()).value +
                   0.5 * problem.beta * p.squaredNorm();
  if (!std::isfinite(J)) throw NumericalError("objective: non-finite value");
  return J;
}

Gradient gradient(const InverseProblem& problem, const Vector& p, double k_f) {
  return Linearization(problem, p, k_f).gradient();
}

Vector hess_matvec_pp(const Linearization& lin, const Vector& dp) { return lin.matvec(dp, 0.0).p; }

Vector hess_matvec_pk(const Linearization& lin, double dkf) {
  return lin.matvec(Vector::Zero(lin.p().size()), dkf).p;
}

double hess_matvec_kp(const Linearization& lin, const Vector& dp) { return lin.matvec(dp, 0.0).kf; }

double hess_matvec_kk(const Linearization& lin, double dkf) {
  return lin.matvec(Vector::Zero(lin.p().size()), dkf).kf;
}

Preconditioner Preconditioner::from_matrix(const Matrix& H) {
  Preconditioner M(static_cast<int>(H.rows()));
  M.H_ = 0.5 * (H + H.transpose());
  auto llt = std::make_shared<Eigen::LLT<Matrix>>(M.H_);
  if (llt->info() != Eigen::Success || !M.H_.allFinite()) {
    std::cerr << "warning: surrogate Hessian is not SPD; using the identity preconditioner\n";
    return Preconditioner(static_cast<int>(H.rows()));
  }
  M.llt_ = std::move(llt);
  return M;
}

Preconditioner Preconditioner::surrogate(const InverseProblem& problem, const Vector& p, double k_f) {
  const Linearization lin(problem, p, k_f, Fidelity::Surrogate, HessianMode::GaussNewton);
  const int n = problem.parameters();
  Matrix H(n, n);
  for (int j = 0; j < n; ++j) H.col(j) = lin.matvec(Vector::Unit(n, j), 0.0).p;
  return from_matrix(H);
}

Vector Preconditioner::apply(const Vector& r) const {
  if (r.size() != n_) throw ConfigError("precond_apply: size mismatch");
  return llt_ ? Vector(llt_->solve(r)) : r;
}

Vector precond_apply(const Preconditioner& M, const Vector& r) { return M.apply(r); }

SchurResult schur_solve(const Linearization& lin, const Preconditioner& M, CgOptions cg) {
  const Gradient& g = lin.gradient();
  const int n = static_cast<int>(g.p.size());
  const auto precondition = [&](const Vector& r) { return M.apply(r); };
  SchurResult out;
  out.dp = Vector::Zero(n);

  HessianProduct hk;
  bool couple = g.kf != 0.0;
  if (couple) {
    hk = lin.matvec(Vector::Zero(n), 1.0);
    couple = std::abs(hk.kf) >= 1e-14;
  }
  if (!couple) {
    out.kf_frozen = true;
    out.cg = pcg([&](const Vector& x) { return lin.matvec(x, 0.0).p; }, precondition, -g.p, out.dp, cg);
    return out;
  }
  const double hkk = hk.kf;
  const Vector& hpk = hk.p;
  const auto schur = [&](const Vector& x) {
    const HessianProduct h = lin.matvec(x, 0.0);
    return Vector(h.p - hpk * (h.kf / hkk));
  };
  const Vector rhs = hpk * (g.kf / hkk) - g.p;
  out.cg = pcg(schur, precondition, rhs, out.dp, cg);
  out.dkf = -(hpk.dot(out.dp) + g.kf) / hkk;
  return out;
}

std::string to_string(NewtonStatus status) {
  switch (status) {
    case NewtonStatus::Converged: return "converged";
    case NewtonStatus::MaxIterations: return "max_iterations";
    case NewtonStatus::LineSearchFailed: return "line_search_failed";
  }
  return "unknown";
}

int InversionState::newton_iterations(int phase) const {
  return static_cast<int>(std::count_if(history.begin(), history.end(), [&](const IterationRecord& r) {
    return r.phase == phase && r.step_length > 0.0;
  }));
}

double InversionState::mean_cg_iterations(int phase) const {
  int steps = 0, total = 0;
  for (const auto& r : history) {
    if (r.phase != phase || r.step_length <= 0.0) continue;
    ++steps;
    total += r.cg_iters;
  }
  return steps ? static_cast<double>(total) / steps : 0.0;
}

std::vector<double> InversionState::objectives(int phase) const {
  std::vector<double> out;
  for (const auto& r : history) {
    if (r.phase == phase) out.push_back(r.objective);
  }
  return out;
}

namespace {

enum class PhaseEnd { Converged, MaxIterations, LineSearchFailed };

PhaseEnd run_phase(const InverseProblem& problem, const NewtonOptions& opts, Fidelity fidelity, int phase,
                   double reference, int max_iters, double rtol, Vector& p, double& k_f,
                   std::vector<IterationRecord>& history) {
  const bool kf = problem.invert_kf;
  for (int it = 0;; ++it) {
    std::unique_ptr<Linearization> lin;
    try {
      lin = std::make_unique<Linearization>(problem, p, k_f, fidelity, opts.hessian);
    } catch (const NumericalError& e) {
      throw NumericalError("newton phase " + std::to_string(phase) + " iteration " + std::to_string(it) + ": " +
                           e.what());
    }
    const double gnorm = lin->gradient().norm();
    if (reference <= 0.0) reference = gnorm;
    IterationRecord rec{it, phase, lin->objective(), gnorm, 0, 0.0, k_f};
    if (gnorm <= rtol * reference || gnorm == 0.0) {
      history.push_back(rec);
      return PhaseEnd::Converged;
    }
    if (it >= max_iters) {
      history.push_back(rec);
      return PhaseEnd::MaxIterations;
    }
    const Preconditioner M = opts.precondition ? Preconditioner::surrogate(problem, p, k_f)
                                               : Preconditioner(problem.parameters());
    SchurResult step = schur_solve(*lin, M, opts.schur);
    rec.cg_iters = step.cg.iterations;
    const Gradient& g = lin->gradient();
    double slope = g.p.dot(step.dp) + g.kf * step.dkf;
    if (!(slope < 0.0) || !step.dp.allFinite() || !std::isfinite(step.dkf)) {
      step.dp = -g.p;
      step.dkf = kf ? -g.kf : 0.0;
      slope = -gnorm * gnorm;
    }
    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h, alpha *= 0.5) {
      const Vector p_trial = p + alpha * step.dp;
      const double k_trial = kf ? k_f + alpha * step.dkf : k_f;
      if (kf && !(k_trial >= 0.0)) continue;
      double J = 0.0;
      try {
        J = objective(problem, p_trial, k_trial, fidelity);
      } catch (const NumericalError&) {
        continue;
      }
      if (J <= lin->objective() + opts.armijo_c1 * alpha * slope && J < lin->objective()) {
        p = p_trial;
        k_f = k_trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      history.push_back(rec);
      return PhaseEnd::LineSearchFailed;
    }
    rec.step_length = alpha;
    history.push_back(rec);
  }
}

}  // namespace

InversionState newton_solve(const InverseProblem& problem, const NewtonOptions& opts) {
  problem.validate();
  InversionState state;
  state.p = opts.p_init.value_or(Vector::Zero(problem.parameters()));
  if (state.p.size() != problem.parameters()) throw ConfigError("newton: initial p has the wrong length");
  state.k_f = problem.invert_kf ? opts.kf_init.value_or(problem.k_f) : problem.k_f;
  state.initial_grad_norm = gradient(problem, state.p, state.k_f).norm();
  if (opts.warm_start) {
    run_phase(problem, opts, Fidelity::Surrogate, 1, 0.0, opts.warm_max, opts.warm_rtol, state.p, state.k_f,
              state.history);
  }
  const PhaseEnd end = run_phase(problem, opts, Fidelity::Exact, 2, state.initial_grad_norm, opts.max_newton,
                                 opts.grad_rtol, state.p, state.k_f, state.history);
  state.status = end == PhaseEnd::Converged       ? NewtonStatus::Converged
                 : end == PhaseEnd::MaxIterations ? NewtonStatus::MaxIterations
                                                  : NewtonStatus::LineSearchFailed;
  return state;
}

void write_convergence_csv(const InversionState& state, std::ostream& os) {
  os << "iter,phase,objective,grad_norm,cg_iters,step_length,k_f\n";
  char buf[256];
  for (const auto& r : state.history) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.10e,%.6e,%d,%.6e,%.8e\n", r.iter, r.phase, r.objective, r.grad_norm,
                  r.cg_iters, r.step_length, r.k_f);
    os << buf;
  }
}

double LCurve::chosen_beta() const {
  if (!corner) throw NumericalError("lcurve: no corner (fewer than 3 valid points)");
  return points[*corner].beta;
}

std::optional<std::size_t> lcurve_corner(const std::vector<LCurvePoint>& points) {
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].valid && points[i].misfit > 0.0 && points[i].p_norm > 0.0) valid.push_back(i);
  }
  if (valid.size() < 3) return std::nullopt;

  // Log-log coordinates scaled to the unit box, so neither axis dominates the curvature.
  std::vector<Eigen::Vector2d> xy;
  for (std::size_t i : valid) xy.emplace_back(std::log(points[i].misfit), std::log(points[i].p_norm));
  Eigen::Vector2d lo = xy.front(), hi = xy.front();
  for (const auto& q : xy) {
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  const Eigen::Vector2d range = (hi - lo).unaryExpr([](double r) { return r > 0.0 ? r : 1.0; });
  double length = 0.0;
  for (auto& q : xy) q = (q - lo).cwiseQuotient(range);
  for (std::size_t k = 1; k < xy.size(); ++k) length += (xy[k] - xy[k - 1]).norm();

  // Points closer than 5% of the curve length to the previous kept point are merged into it:
  // near-coincident triples (the flat under-regularized end) give spurious three-point curvature.
  std::vector<std::size_t> kept{0};
  for (std::size_t k = 1; k < xy.size(); ++k) {
    if ((xy[k] - xy[kept.back()]).norm() >= 0.05 * length) kept.push_back(k);
  }
  if (kept.back() != xy.size() - 1) {
    if (kept.size() > 1) kept.back() = xy.size() - 1;
    else kept.push_back(xy.size() - 1);
  }
  if (kept.size() < 3) {
    kept.resize(xy.size());
    for (std::size_t k = 0; k < xy.size(); ++k) kept[k] = k;
  }

  std::optional<std::size_t> best;
  double best_kappa = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 1; m + 1 < kept.size(); ++m) {
    const Eigen::Vector2d& a = xy[kept[m - 1]];
    const Eigen::Vector2d& b = xy[kept[m]];
    const Eigen::Vector2d& c = xy[kept[m + 1]];
    const Eigen::Vector2d u = b - a, v = c - b, w = c - a;
    const double denom = u.norm() * v.norm() * w.norm();
    if (denom == 0.0) continue;
    const double kappa = 2.0 * (u.x() * v.y() - u.y() * v.x()) / denom;
    if (kappa > best_kappa) {
      best_kappa = kappa;
      best = valid[kept[m]];
    }
  }
  return best;
}

LCurve lcurve(const InverseProblem& problem, std::vector<double> betas, const NewtonOptions& options) {
  if (betas.size() < 4) throw ConfigError("lcurve: at least 4 beta values required");
  std::sort(betas.begin(), betas.end());
  for (double b : betas) {
    if (!(b > 0.0)) throw ConfigError("lcurve: beta values must be positive");
  }
  LCurve curve;
  for (double b : betas) {
    InverseProblem prob = problem;
    prob.beta = b;
    LCurvePoint pt;
    pt.beta = b;
    try {
      const InversionState st = newton_solve(prob, options);
      const Linearization lin(prob, st.p, st.k_f);
      pt.misfit = std::sqrt(2.0 * lin.misfit());
      pt.p_norm = st.p.norm();
      pt.status = to_string(st.status);
      pt.valid = st.status != NewtonStatus::LineSearchFailed || st.history.back().grad_norm <= 1e-3 * st.initial_grad_norm;
    } catch (const Error& e) {
      pt.status = std::string("failed: ") + e.what();
    }
    curve.points.push_back(pt);
  }
  curve.corner = lcurve_corner(curve.points);
  return curve;
}

void write_lcurve_csv(const LCurve& curve, std::ostream& os) {
  os << "beta,misfit,p_norm,valid,corner,status\n";
  char buf[256];
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const auto& pt = curve.points[i];
    std::snprintf(buf, sizeof buf, "%.6e,%.10e,%.10e,%d,%d,", pt.beta, pt.misfit, pt.p_norm, pt.valid ? 1 : 0,
                  curve.corner && *curve.corner == i ? 1 : 0);
    os << buf << pt.status << '\n';
  }
}

}  // namespace glioma
