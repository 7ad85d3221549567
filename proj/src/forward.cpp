#include "glioma/forward.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "glioma/errors.hpp"
#include "glioma/volume_io.hpp"

namespace glioma {
namespace {

// Denominator c + (1 - c) e^{-rho dt}; must stay positive.
Vector flow_denominator(const Vector& c, double decay) {
  Vector den = (c.array() + (1.0 - c.array()) * decay).matrix();
  for (Eigen::Index i = 0; i < den.size(); ++i) {
    if (!(den[i] > 0.0) || !std::isfinite(den[i])) {
      throw NumericalError("reaction: concentration " + std::to_string(c[i]) + " beyond the logistic pole at voxel " +
                           std::to_string(i));
    }
  }
  return den;
}

}  // namespace

void ReactionParams::validate() const {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw ConfigError("rho: must be >= 0");
}

Vector reaction_flow(const Vector& c, double rho, double dt) {
  const double decay = std::exp(-rho * dt);
  return (c.array() / flow_denominator(c, decay).array()).matrix();
}

Vector reaction_tangent(const Vector& c, double rho, double dt) {
  const double decay = std::exp(-rho * dt);
  return (decay / flow_denominator(c, decay).array().square()).matrix();
}

Vector reaction_curvature(const Vector& c, double rho, double dt) {
  const double decay = std::exp(-rho * dt);
  return (-2.0 * decay * (1.0 - decay) / flow_denominator(c, decay).array().cube()).matrix();
}

ScalarField reaction_step(const ScalarField& c, double rho, double dt) {
  if (!(dt > 0.0)) throw ConfigError("reaction_step: dt must be positive");
  ReactionParams{rho}.validate();
  require_finite(c.grid(), c.values(), "reaction_step");
  return ScalarField(c.grid(), reaction_flow(c.values(), rho, dt));
}

ScalarField diffusion_halfstep(const ScalarField& c, const TensorField& K, double dt, CgOptions cg) {
  require_same_grid(c.grid(), K.grid(), "diffusion_halfstep");
  if (!(dt > 0.0)) throw ConfigError("diffusion_halfstep: dt must be positive");
  const CrankNicolsonDiffusion diffusion(K, dt, cg);
  return ScalarField(c.grid(), diffusion.half_step(c.values()));
}

Vector Trajectory::post_reaction(int n, double rho) const {
  return reaction_flow(midpoints.at(static_cast<std::size_t>(n)), rho, time.dt());
}

Trajectory propagate(const Vector& c0, const DiffusionPropagator& diffusion, double rho, const TimeGrid& time) {
  time.validate();
  Trajectory traj{diffusion.grid(), time, {}, {}};
  traj.states.reserve(static_cast<std::size_t>(time.n_steps) + 1);
  traj.midpoints.reserve(static_cast<std::size_t>(time.n_steps));
  traj.states.push_back(c0);
  const double dt = time.dt();
  for (int n = 0; n < time.n_steps; ++n) {
    traj.midpoints.push_back(diffusion.half_step(traj.states.back()));
    const Vector reacted = reaction_flow(traj.midpoints.back(), rho, dt);
    traj.states.push_back(diffusion.half_step(reacted));
  }
  require_finite(traj.grid, traj.states.back(), "forward_solve");
  return traj;
}

Trajectory forward_solve(const ScalarField& c0, const DiffusionPropagator& diffusion, const ReactionParams& reaction,
                         const TimeGrid& time) {
  reaction.validate();
  require_same_grid(c0.grid(), diffusion.grid(), "forward_solve");
  require_finite(c0.grid(), c0.values(), "forward_solve");
  constexpr double slack = 1e-9;
  if (c0.values().minCoeff() < 0.0 || c0.values().maxCoeff() > 1.0 + slack) {
    throw ConfigError("forward_solve: initial condition must lie in [0, 1]");
  }
  return propagate(c0.values(), diffusion, reaction.rho, time);
}

Trajectory forward_solve(const ScalarField& c0, const TensorField& K, const ReactionParams& reaction,
                         const TimeGrid& time, CgOptions cg) {
  const CrankNicolsonDiffusion diffusion(K, time.dt(), cg);
  return forward_solve(c0, diffusion, reaction, time);
}

std::vector<Vector> anisotropic_sources(const Trajectory& base, const DiffusionPropagator& diffusion, double rho) {
  std::vector<Vector> sources;
  sources.reserve(2 * static_cast<std::size_t>(base.steps()));
  for (int n = 0; n < base.steps(); ++n) {
    const auto i = static_cast<std::size_t>(n);
    sources.push_back(diffusion.anisotropic(base.states[i] + base.midpoints[i]));
    sources.push_back(diffusion.anisotropic(base.post_reaction(n, rho) + base.states[i + 1]));
  }
  return sources;
}

Trajectory propagate_tangent(const Trajectory& base, const Vector& dc0, double dkf,
                             const DiffusionPropagator& diffusion, double rho,
                             const std::vector<Vector>& sources) {
  const double s = diffusion.weight();
  const double dt = base.time.dt();
  const bool with_source = dkf != 0.0;
  if (with_source && sources.size() != 2 * static_cast<std::size_t>(base.steps())) {
    throw ConfigError("linearized_forward: source terms do not match the trajectory");
  }
  Trajectory tangent{base.grid, base.time, {}, {}};
  tangent.states.reserve(base.states.size());
  tangent.midpoints.reserve(base.midpoints.size());
  tangent.states.push_back(dc0);
  for (int n = 0; n < base.steps(); ++n) {
    const auto i = static_cast<std::size_t>(n);
    Vector rhs = diffusion.explicit_part(tangent.states.back());
    if (with_source) rhs += (s * dkf) * sources[2 * i];
    tangent.midpoints.push_back(diffusion.solve(rhs));
    const Vector reacted = reaction_tangent(base.midpoints[i], rho, dt).cwiseProduct(tangent.midpoints.back());
    rhs = diffusion.explicit_part(reacted);
    if (with_source) rhs += (s * dkf) * sources[2 * i + 1];
    tangent.states.push_back(diffusion.solve(rhs));
  }
  return tangent;
}

Trajectory linearized_forward(const Trajectory& base, const ScalarField& dp_field, double dkf,
                              const DiffusionPropagator& diffusion, const ReactionParams& reaction) {
  require_same_grid(base.grid, dp_field.grid(), "linearized_forward");
  require_same_grid(base.grid, diffusion.grid(), "linearized_forward");
  if (base.states.size() != base.midpoints.size() + 1 || base.steps() != base.time.n_steps) {
    throw ConfigError("linearized_forward: incomplete base trajectory");
  }
  std::vector<Vector> sources;
  if (dkf != 0.0) sources = anisotropic_sources(base, diffusion, reaction.rho);
  return propagate_tangent(base, dp_field.values(), dkf, diffusion, reaction.rho, sources);
}

void export_trajectory(const Trajectory& traj, const std::filesystem::path& dir, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / (prefix + "_manifest.txt"));
  if (!manifest) throw IoError((dir / (prefix + "_manifest.txt")).string() + ": cannot open for writing");
  for (std::size_t n = 0; n < traj.states.size(); ++n) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%03zu.glf", prefix.c_str(), n);
    save_scalar(dir / name, ScalarField(traj.grid, traj.states[n]));
    char line[128];
    std::snprintf(line, sizeof(line), "%zu %.17g %s\n", n, static_cast<double>(n) * traj.time.dt(), name);
    manifest << line;
  }
  if (!manifest) throw IoError("export_trajectory: manifest write failed");
}

}  // namespace glioma
