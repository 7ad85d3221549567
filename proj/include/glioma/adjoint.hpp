#pragma once

#include <string>
#include <vector>

#include "glioma/forward.hpp"
#include "glioma/observation.hpp"

namespace glioma {

/// GAUSS_NEWTON drops every second-order term weighted by the adjoint state
/// (reaction curvature and the k_f cross terms); FULL keeps the exact discrete Hessian.
enum class HessianMode { GaussNewton, Full };

HessianMode parse_hessian_mode(const std::string& s);
std::string to_string(HessianMode mode);

/// Backward sweep through the transposed steps of a forward trajectory.
/// Per step n (reverse order): second half step, reaction, first half step.
struct AdjointTrajectory {
  Grid grid;
  TimeGrid time;
  std::vector<Vector> states;         // alpha at t_n, n = 0..n_steps
  std::vector<Vector> post_reaction;  // alpha at the post-reaction point of step n
  std::vector<Vector> implicit;       // (I - sD)^{-1} alpha_out of half step h (2n first, 2n+1 second)

  ScalarField state(int n) const { return ScalarField(grid, states.at(static_cast<std::size_t>(n))); }
  ScalarField initial() const { return ScalarField(grid, states.front()); }
};

/// Applies the transpose of the tangent flow map to `terminal`, recording every intermediate.
AdjointTrajectory propagate_adjoint(const Trajectory& base, const Vector& terminal,
                                    const DiffusionPropagator& diffusion, double rho);

/// Adjoint of the misfit at t = 1: alpha_1 = -O1 (O1 c_1 - d_1).
AdjointTrajectory adjoint_solve(const Trajectory& base, const ScalarField& d1, const ObservationMask& mask1,
                                const DiffusionPropagator& diffusion, const ReactionParams& reaction);

/// Linearization-point data reused by every incremental adjoint solve.
struct SecondOrderTerms {
  HessianMode mode = HessianMode::GaussNewton;
  std::vector<Vector> sources;  // D_T (x_in + x_out) per half step
  std::vector<Vector> mixed;    // FULL: s (D_T y + (I + sD)(I - sD)^{-1} D_T y) per half step
  double curvature = 0.0;       // FULL: second k_f derivative paired with the adjoint
};

SecondOrderTerms second_order_terms(const Trajectory& base, const AdjointTrajectory& adjoint,
                                    const DiffusionPropagator& diffusion, double rho, HessianMode mode,
                                    bool with_kf);

struct IncrementalAdjoint {
  AdjointTrajectory adjoint;  // states/post_reaction only
  double kf_term = 0.0;       // k_f row of the reduced Hessian matvec
};

/// Second-order adjoint for the tangent `tangent` (direction with k_f increment `dkf`),
/// started from alpha~_1 = -O1 c~_1.
IncrementalAdjoint incremental_adjoint(const Trajectory& base, const AdjointTrajectory& adjoint,
                                       const Trajectory& tangent, double dkf, const ObservationMask& mask1,
                                       const DiffusionPropagator& diffusion, double rho,
                                       const SecondOrderTerms& terms);

/// dJ/dk_f assembled from the adjoint sweep: -s sum_h <D_T(x_in + x_out), y_h>.
double kf_gradient(const AdjointTrajectory& adjoint, const std::vector<Vector>& sources, double weight);

}  // namespace glioma
