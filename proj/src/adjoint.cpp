#include "glioma/adjoint.hpp"

#include "glioma/errors.hpp"

namespace glioma {

HessianMode parse_hessian_mode(const std::string& s) {
  if (s == "gn" || s == "gauss_newton") return HessianMode::GaussNewton;
  if (s == "full") return HessianMode::Full;
  throw ConfigError("hessian: expected gn or full, got '" + s + "'");
}

std::string to_string(HessianMode mode) { return mode == HessianMode::GaussNewton ? "gn" : "full"; }

AdjointTrajectory propagate_adjoint(const Trajectory& base, const Vector& terminal,
                                    const DiffusionPropagator& diffusion, double rho) {
  const int N = base.steps();
  const double dt = base.time.dt();
  AdjointTrajectory adj{base.grid, base.time, {}, {}, {}};
  adj.states.resize(static_cast<std::size_t>(N) + 1);
  adj.post_reaction.resize(static_cast<std::size_t>(N));
  adj.implicit.resize(2 * static_cast<std::size_t>(N));
  Vector alpha = terminal;
  adj.states[static_cast<std::size_t>(N)] = alpha;
  for (int n = N - 1; n >= 0; --n) {
    const auto i = static_cast<std::size_t>(n);
    Vector y = diffusion.solve(alpha);
    adj.post_reaction[i] = diffusion.explicit_part(y);
    adj.implicit[2 * i + 1] = std::move(y);
    const Vector before = reaction_tangent(base.midpoints[i], rho, dt).cwiseProduct(adj.post_reaction[i]);
    y = diffusion.solve(before);
    alpha = diffusion.explicit_part(y);
    adj.implicit[2 * i] = std::move(y);
    adj.states[i] = alpha;
  }
  require_finite(adj.grid, adj.states.front(), "adjoint_solve");
  return adj;
}

AdjointTrajectory adjoint_solve(const Trajectory& base, const ScalarField& d1, const ObservationMask& mask1,
                                const DiffusionPropagator& diffusion, const ReactionParams& reaction) {
  reaction.validate();
  require_same_grid(base.grid, d1.grid(), "adjoint_solve");
  require_same_grid(base.grid, mask1.grid(), "adjoint_solve");
  if (base.steps() != base.time.n_steps) throw ConfigError("adjoint_solve: trajectory does not cover [0, 1]");
  const Vector terminal = -mask1.apply(mask1.apply(base.states.back()) - d1.values());
  return propagate_adjoint(base, terminal, diffusion, reaction.rho);
}

SecondOrderTerms second_order_terms(const Trajectory& base, const AdjointTrajectory& adjoint,
                                    const DiffusionPropagator& diffusion, double rho, HessianMode mode,
                                    bool with_kf) {
  SecondOrderTerms terms;
  terms.mode = mode;
  if (!with_kf) return terms;
  terms.sources = anisotropic_sources(base, diffusion, rho);
  if (mode == HessianMode::Full) {
    const double s = diffusion.weight();
    const Grid& g = base.grid;
    terms.mixed.reserve(terms.sources.size());
    for (std::size_t h = 0; h < terms.sources.size(); ++h) {
      const Vector dy = diffusion.anisotropic(adjoint.implicit[h]);
      const Vector r = diffusion.solve(dy);
      terms.mixed.push_back(s * (dy + diffusion.explicit_part(r)));
      terms.curvature += -2.0 * s * s * weighted_dot(g, terms.sources[h], r);
    }
  }
  return terms;
}

IncrementalAdjoint incremental_adjoint(const Trajectory& base, const AdjointTrajectory& adjoint,
                                       const Trajectory& tangent, double dkf, const ObservationMask& mask1,
                                       const DiffusionPropagator& diffusion, double rho,
                                       const SecondOrderTerms& terms) {
  const int N = base.steps();
  if (tangent.steps() != N || adjoint.post_reaction.size() != static_cast<std::size_t>(N)) {
    throw ConfigError("incremental_adjoint: trajectories do not share a time grid");
  }
  const bool full = terms.mode == HessianMode::Full;
  const bool kf = !terms.sources.empty();
  const double s = diffusion.weight();
  const double dt = base.time.dt();
  const Grid& g = base.grid;

  IncrementalAdjoint out;
  out.adjoint = AdjointTrajectory{g, base.time, {}, {}, {}};
  out.adjoint.states.resize(static_cast<std::size_t>(N) + 1);
  out.adjoint.post_reaction.resize(static_cast<std::size_t>(N));

  Vector alpha = -mask1.apply(tangent.states.back());
  out.adjoint.states[static_cast<std::size_t>(N)] = alpha;
  double kf_term = 0.0;
  for (int n = N - 1; n >= 0; --n) {
    const auto i = static_cast<std::size_t>(n);
    const Vector tangent_slope = reaction_tangent(base.midpoints[i], rho, dt);

    // second diffusion half step (h = 2n + 1)
    Vector z = diffusion.solve(alpha);
    if (kf) kf_term -= s * weighted_dot(g, terms.sources[2 * i + 1], z);
    Vector alpha_v = diffusion.explicit_part(z);
    if (full && kf) {
      const Vector reacted_tangent = tangent_slope.cwiseProduct(tangent.midpoints[i]);
      kf_term -= weighted_dot(g, reacted_tangent, terms.mixed[2 * i + 1]);
      if (dkf != 0.0) alpha_v += dkf * terms.mixed[2 * i + 1];
    }
    out.adjoint.post_reaction[i] = alpha_v;

    // reaction
    Vector alpha_u = tangent_slope.cwiseProduct(alpha_v);
    if (full) {
      alpha_u += reaction_curvature(base.midpoints[i], rho, dt)
                     .cwiseProduct(tangent.midpoints[i])
                     .cwiseProduct(adjoint.post_reaction[i]);
    }

    // first diffusion half step (h = 2n)
    z = diffusion.solve(alpha_u);
    if (kf) kf_term -= s * weighted_dot(g, terms.sources[2 * i], z);
    alpha = diffusion.explicit_part(z);
    if (full && kf) {
      kf_term -= weighted_dot(g, tangent.states[i], terms.mixed[2 * i]);
      if (dkf != 0.0) alpha += dkf * terms.mixed[2 * i];
    }
    out.adjoint.states[i] = alpha;
  }
  if (full && kf) kf_term += dkf * terms.curvature;
  out.kf_term = kf_term;
  return out;
}

double kf_gradient(const AdjointTrajectory& adjoint, const std::vector<Vector>& sources, double weight) {
  if (sources.size() != adjoint.implicit.size()) throw ConfigError("kf_gradient: source count mismatch");
  double g = 0.0;
  for (std::size_t h = 0; h < sources.size(); ++h) g -= weight * weighted_dot(adjoint.grid, sources[h], adjoint.implicit[h]);
  return g;
}

}  // namespace glioma
