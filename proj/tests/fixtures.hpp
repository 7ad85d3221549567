#pragma once

#include <random>

#include "glioma/inversion.hpp"

namespace glioma::testing {

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

/// Smooth bump centred at `center` (physical coordinates), peak `amplitude`.
inline ScalarField bump(const Grid& g, const Eigen::Vector3d& center, double width, double amplitude) {
  ScalarField f(g);
  for (std::size_t v = 0; v < g.size(); ++v) {
    f[v] = amplitude * std::exp(-(g.position(v) - center).squaredNorm() / (2.0 * width * width));
  }
  return f;
}

struct SmallProblem {
  Grid grid;
  Anatomy anatomy;
  DiffusionParams diffusion;
  InverseProblem problem;
  Vector p_true;
};

/// 2D problem with synthetic anatomy and data generated from the model itself (inverse crime).
inline SmallProblem small_problem(int n = 32, double c_d = 0.2, bool invert_kf = true, int n_steps = 10,
                                  double beta = 1e-2) {
  SmallProblem s;
  s.grid = Grid::cube(2, n, 2.0 * M_PI);
  AnatomySpec spec = AnatomySpec::standard(s.grid);
  spec.fiber = FiberPattern::Circular;
  s.anatomy = synth_anatomy(s.grid, spec);
  s.diffusion.k_f = 0.15;
  TimeGrid time;
  time.n_steps = n_steps;
  ReactionParams reaction;

  const Eigen::Vector3d c(0.45 * 2.0 * M_PI, 0.55 * 2.0 * M_PI, 0.0);
  const ScalarField c0 = bump(s.grid, c, 0.5, 0.8);
  const TensorField K = assemble_K(s.anatomy.tissue, build_tensor(s.anatomy.dti, s.diffusion.tensor_mode), s.diffusion);
  const Trajectory truth = forward_solve(c0, K, reaction, time);
  const ObservationMask m0 = ObservationMask::from_threshold(truth.state(0), c_d);
  const ObservationMask m1 = ObservationMask::from_threshold(truth.final_state(), c_d);
  const GaussianBasis basis = GaussianBasis::lattice(m0);
  DiffusionParams start = s.diffusion;
  if (invert_kf) start.k_f = 0.05;
  s.problem = make_inverse_problem(s.anatomy, start, reaction, time, truth.state(0), truth.final_state(), m0, m1,
                                   basis, beta, invert_kf);
  if (!invert_kf) s.problem.k_f = s.diffusion.k_f;
  return s;
}

}  // namespace glioma::testing

namespace glioma::testing {

/// All-white brain with isotropic DTI (so T = 0 and K = k_w I); data generated from `p_true`.
inline SmallProblem uniform_problem(int n, double rho, int per_axis, double beta, double c_d = 0.0) {
  SmallProblem s;
  s.grid = Grid::cube(2, n, 2.0 * M_PI);
  s.anatomy = Anatomy{TissueMap(s.grid, Tissue::White), TensorField::isotropic(s.grid, 1.0)};
  TimeGrid time;
  ReactionParams reaction;
  reaction.rho = rho;
  const ScalarField seed = bump(s.grid, Eigen::Vector3d(M_PI, M_PI, 0), 0.9, 0.8);
  const GaussianBasis basis = GaussianBasis::lattice(ObservationMask::from_threshold(seed, 0.3), per_axis);
  const Parametrization phi(s.grid, basis);
  s.p_true = Vector::Constant(phi.size(), 0.3);
  const ScalarField c0(s.grid, phi.apply(s.p_true));
  const TensorField K = assemble_K(s.anatomy.tissue, TensorField(s.grid), s.diffusion);
  const Trajectory truth = forward_solve(c0, K, reaction, time);
  const ObservationMask m0 = ObservationMask::from_threshold(truth.state(0), c_d);
  const ObservationMask m1 = ObservationMask::from_threshold(truth.final_state(), c_d);
  s.problem = make_inverse_problem(s.anatomy, s.diffusion, reaction, time, truth.state(0), truth.final_state(), m0,
                                   m1, basis, beta, false);
  return s;
}

}  // namespace glioma::testing
