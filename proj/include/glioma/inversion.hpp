#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "glioma/adjoint.hpp"

namespace glioma {

/// Isotropic Gaussians with a common width: c_0(x) = sum_j p_j exp(-|x - x_j|^2 / (2 sigma^2)).
struct GaussianBasis {
  std::vector<Eigen::Vector3d> centers;
  double sigma = 1.0;

  int size() const { return static_cast<int>(centers.size()); }
  void validate(const Grid& grid) const;

  /// per_axis^d centers on a regular lattice over the bounding box of `support`
  /// dilated by `dilation` voxels; sigma = width_factor * mean center spacing.
  static GaussianBasis lattice(const ObservationMask& support, int per_axis = 3, int dilation = 2,
                               double width_factor = 0.75);
};

ScalarField basis_apply(const GaussianBasis& basis, const Grid& grid, const Vector& p);
/// Exact adjoint of basis_apply in the h^d-weighted field inner product.
Vector basis_apply_transpose(const GaussianBasis& basis, const ScalarField& f);

/// Dense nvox x n_p realization of the basis, reused across solves.
class Parametrization {
 public:
  Parametrization() = default;
  Parametrization(const Grid& grid, GaussianBasis basis);

  const Grid& grid() const { return grid_; }
  const GaussianBasis& basis() const { return basis_; }
  int size() const { return basis_.size(); }
  const Matrix& matrix() const { return phi_; }

  Vector apply(const Vector& p) const;
  Vector transpose(const Vector& f) const;

 private:
  Grid grid_;
  GaussianBasis basis_;
  Matrix phi_;
};

struct InverseProblem {
  ScalarField d0, d1;
  ObservationMask mask0, mask1;
  double beta = 0.01;
  TissueMap tissue;
  DiffusionCoefficients coeffs;
  double k_f = 0.0;  // held fixed when !invert_kf, initial guess otherwise
  ReactionParams reaction;
  TimeGrid time;
  bool invert_kf = true;
  Parametrization phi;
  CgOptions diffusion_cg{1e-10, 500};

  const Grid& grid() const { return d0.grid(); }
  int parameters() const { return phi.size(); }
  void validate() const;
};

InverseProblem make_inverse_problem(const Anatomy& anatomy, const DiffusionParams& diffusion,
                                    const ReactionParams& reaction, const TimeGrid& time, const ScalarField& d0,
                                    const ScalarField& d1, const ObservationMask& mask0,
                                    const ObservationMask& mask1, const GaussianBasis& basis, double beta,
                                    bool invert_kf);

/// Exact: variable-K Crank-Nicolson. Surrogate: brain-averaged constant-K spectral propagator.
enum class Fidelity { Exact, Surrogate };

std::unique_ptr<DiffusionPropagator> make_propagator(const InverseProblem& problem, double k_f, Fidelity fidelity);

struct Gradient {
  Vector p;
  double kf = 0.0;
  double norm() const { return std::sqrt(p.squaredNorm() + kf * kf); }
};

struct HessianProduct {
  Vector p;
  double kf = 0.0;
};

/// Forward and adjoint state at one iterate; every derivative query is answered from here.
class Linearization {
 public:
  Linearization(const InverseProblem& problem, Vector p, double k_f, Fidelity fidelity = Fidelity::Exact,
                HessianMode mode = HessianMode::GaussNewton);

  const Vector& p() const { return p_; }
  double k_f() const { return k_f_; }
  double objective() const { return objective_; }
  double misfit() const { return misfit_; }
  const Gradient& gradient() const { return gradient_; }
  const Trajectory& trajectory() const { return base_; }
  const AdjointTrajectory& adjoint() const { return adjoint_; }
  HessianMode mode() const { return mode_; }

  /// Reduced Hessian applied to (dp, dkf); the k_f row/column vanish when k_f is not inverted.
  HessianProduct matvec(const Vector& dp, double dkf) const;

 private:
  const InverseProblem* problem_;
  Vector p_;
  double k_f_;
  HessianMode mode_;
  std::unique_ptr<DiffusionPropagator> propagator_;
  Trajectory base_;
  AdjointTrajectory adjoint_;
  SecondOrderTerms terms_;
  double objective_ = 0.0;
  double misfit_ = 0.0;
  Gradient gradient_;
};

/// J = 1/2 |O0 Phi p - d0|^2 + 1/2 |O1 c1 - d1|^2 + beta/2 |p|^2 (fields h^d-weighted).
double objective(const InverseProblem& problem, const Vector& p, double k_f,
                 Fidelity fidelity = Fidelity::Exact);
Gradient gradient(const InverseProblem& problem, const Vector& p, double k_f);

Vector hess_matvec_pp(const Linearization& lin, const Vector& dp);
Vector hess_matvec_pk(const Linearization& lin, double dkf);
double hess_matvec_kp(const Linearization& lin, const Vector& dp);
double hess_matvec_kk(const Linearization& lin, double dkf);

/// Approximate H_pp^{-1} from the surrogate Gauss-Newton Hessian, assembled densely.
class Preconditioner {
 public:
  /// Identity.
  explicit Preconditioner(int n) : n_(n) {}
  static Preconditioner surrogate(const InverseProblem& problem, const Vector& p, double k_f);
  static Preconditioner from_matrix(const Matrix& H);

  bool is_identity() const { return !llt_; }
  const Matrix& matrix() const { return H_; }
  Vector apply(const Vector& r) const;

 private:
  int n_;
  Matrix H_;
  std::shared_ptr<Eigen::LLT<Matrix>> llt_;
};

Vector precond_apply(const Preconditioner& M, const Vector& r);

struct SchurResult {
  Vector dp;
  double dkf = 0.0;
  CgResult cg;
  bool kf_frozen = false;  // H_kk numerically zero; k_f step suppressed
};

/// Newton step from H (dp, dkf) = -g, eliminating the scalar k_f block first.
SchurResult schur_solve(const Linearization& lin, const Preconditioner& M, CgOptions cg = {1e-6, 100});

enum class NewtonStatus { Converged, MaxIterations, LineSearchFailed };
std::string to_string(NewtonStatus status);

struct NewtonOptions {
  HessianMode hessian = HessianMode::GaussNewton;
  bool warm_start = true;
  bool precondition = true;
  int max_newton = 25;
  double grad_rtol = 1e-6;
  int warm_max = 10;
  double warm_rtol = 1e-3;
  CgOptions schur{1e-6, 100};
  double armijo_c1 = 1e-4;
  int max_halvings = 20;
  std::optional<Vector> p_init;
  std::optional<double> kf_init;
};

struct IterationRecord {
  int iter = 0;
  int phase = 2;
  double objective = 0.0;
  double grad_norm = 0.0;
  int cg_iters = 0;
  double step_length = 0.0;
  double k_f = 0.0;
};

struct InversionState {
  Vector p;
  double k_f = 0.0;
  NewtonStatus status = NewtonStatus::MaxIterations;
  std::vector<IterationRecord> history;  // one row per Newton iteration; final row has no step
  double initial_grad_norm = 0.0;

  int newton_iterations(int phase) const;
  double mean_cg_iterations(int phase) const;
  std::vector<double> objectives(int phase) const;
};

/// Warm start on the surrogate model (phase 1), then Newton-CG with Armijo backtracking (phase 2).
InversionState newton_solve(const InverseProblem& problem, const NewtonOptions& options = {});

/// iter,phase,objective,grad_norm,cg_iters,step_length,k_f
void write_convergence_csv(const InversionState& state, std::ostream& os);

struct LCurvePoint {
  double beta = 0.0;
  double misfit = 0.0;  // sqrt(|O0 Phi p - d0|^2 + |O1 c1 - d1|^2)
  double p_norm = 0.0;
  bool valid = false;
  std::string status;
};

struct LCurve {
  std::vector<LCurvePoint> points;  // increasing beta
  std::optional<std::size_t> corner;
  double chosen_beta() const;
};

/// Maximum signed Menger curvature of (log misfit, log |p|) over interior valid points, with both axes
/// scaled to [0, 1] and points within 5% of the curve length of their predecessor merged.
std::optional<std::size_t> lcurve_corner(const std::vector<LCurvePoint>& points);

LCurve lcurve(const InverseProblem& problem, std::vector<double> betas, const NewtonOptions& options = {});
void write_lcurve_csv(const LCurve& curve, std::ostream& os);

}  // namespace glioma
