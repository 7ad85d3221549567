#pragma once

#include <filesystem>
#include <vector>

#include "glioma/diffusion.hpp"

namespace glioma {

/// Logistic reaction R(c) = rho c (1 - c).
struct ReactionParams {
  double rho = 2.0;
  void validate() const;
};

// Exact flow of dc/dt = rho c (1 - c) over dt and its first two derivatives in c:
//   c' = c / (c + (1 - c) e^{-rho dt}).
// Throws NumericalError if a voxel lies beyond the pole of the flow map.
Vector reaction_flow(const Vector& c, double rho, double dt);
Vector reaction_tangent(const Vector& c, double rho, double dt);
Vector reaction_curvature(const Vector& c, double rho, double dt);

ScalarField reaction_step(const ScalarField& c, double rho, double dt);

/// One Crank-Nicolson step over dt/2 (weight dt/4), solved by preconditioned CG.
ScalarField diffusion_halfstep(const ScalarField& c, const TensorField& K, double dt, CgOptions cg = {});

/// States of one Strang-split integration. Step n maps states[n] to states[n+1] via
///   midpoints[n] = S_D states[n],  S_R midpoints[n],  S_D (.)  -> states[n+1].
struct Trajectory {
  Grid grid;
  TimeGrid time;
  std::vector<Vector> states;     // n_steps + 1
  std::vector<Vector> midpoints;  // n_steps

  int steps() const { return static_cast<int>(midpoints.size()); }
  ScalarField state(int n) const { return ScalarField(grid, states.at(static_cast<std::size_t>(n))); }
  ScalarField final_state() const { return ScalarField(grid, states.back()); }
  /// State after the reaction sub-step of step n (recomputed from the midpoint).
  Vector post_reaction(int n, double rho) const;
};

/// Strang splitting S_D^{dt/2} S_R^{dt} S_D^{dt/2} without range checks on c0.
Trajectory propagate(const Vector& c0, const DiffusionPropagator& diffusion, double rho, const TimeGrid& time);

/// Validated entry point: c0 must lie in [0, 1 + 1e-9].
Trajectory forward_solve(const ScalarField& c0, const DiffusionPropagator& diffusion, const ReactionParams& reaction,
                         const TimeGrid& time);
Trajectory forward_solve(const ScalarField& c0, const TensorField& K, const ReactionParams& reaction,
                         const TimeGrid& time, CgOptions cg = {});

/// D_T (x_in + x_out) for every diffusion half step, ordered 2n (first) and 2n+1 (second).
std::vector<Vector> anisotropic_sources(const Trajectory& base, const DiffusionPropagator& diffusion, double rho);

/// Tangent of the discrete flow map at `base` in direction (dc0, dkf).
/// Each diffusion half step solves
///   (I - sD) x_out = (I + sD) x_in + s dkf D_T (c_in + c_out),
/// the reaction sub-step multiplies by the exact flow-map derivative.
/// `midpoints` of the result hold the tangent after the first half step.
Trajectory propagate_tangent(const Trajectory& base, const Vector& dc0, double dkf,
                             const DiffusionPropagator& diffusion, double rho,
                             const std::vector<Vector>& sources);

Trajectory linearized_forward(const Trajectory& base, const ScalarField& dp_field, double dkf,
                              const DiffusionPropagator& diffusion, const ReactionParams& reaction);

/// Writes <prefix>_NNN.glf per time step and <prefix>_manifest.txt (index, time).
void export_trajectory(const Trajectory& traj, const std::filesystem::path& dir, const std::string& prefix);

}  // namespace glioma
