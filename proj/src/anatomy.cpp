#include "glioma/anatomy.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "glioma/errors.hpp"

namespace glioma {
namespace {

constexpr double kPsdTolerance = 1e-10;

std::string voxel_name(const Grid& g, std::size_t i) {
  const auto s = g.subscripts(i);
  std::ostringstream os;
  os << "(" << s[0] << "," << s[1];
  if (g.dim() == 3) os << "," << s[2];
  os << ")";
  return os.str();
}

template <int D>
using Mat = Eigen::Matrix<double, D, D>;

template <int D>
Mat<D> voxel_tensor(const TensorField& t, std::size_t i) {
  return t.at(i).template topLeftCorner<D, D>();
}

template <int D>
Eigen::SelfAdjointEigenSolver<Mat<D>> decompose(const TensorField& t, std::size_t i) {
  Eigen::SelfAdjointEigenSolver<Mat<D>> es(voxel_tensor<D>(t, i));
  if (es.info() != Eigen::Success) {
    throw NumericalError("tensor: eigendecomposition failed at voxel " + voxel_name(t.grid(), i));
  }
  if (es.eigenvalues().minCoeff() < -kPsdTolerance) {
    throw ConfigError("tensor: voxel " + voxel_name(t.grid(), i) + " is not positive semi-definite");
  }
  return es;
}

template <int D>
TensorField full_impl(const TensorField& dti) {
  TensorField out(dti.grid());
  for (std::size_t i = 0; i < dti.grid().size(); ++i) {
    const auto es = decompose<D>(dti, i);
    std::array<double, D> lam{};
    for (int a = 0; a < D; ++a) lam[a] = std::max(0.0, es.eigenvalues()[a]);
    const double fa = fractional_anisotropy(lam);
    out.values().row(static_cast<Eigen::Index>(i)) = fa * dti.values().row(static_cast<Eigen::Index>(i));
  }
  return out;
}

template <int D>
TensorField principal_impl(const TensorField& dti) {
  TensorField out(dti.grid());
  for (std::size_t i = 0; i < dti.grid().size(); ++i) {
    const auto es = decompose<D>(dti, i);
    const auto& ev = es.eigenvalues();
    const double top = ev.maxCoeff();
    const double tie = 1e-12 * std::max(1.0, std::abs(top));
    int best = -1;
    int best_axis = D;
    for (int a = 0; a < D; ++a) {
      if (top - ev[a] > tie) continue;
      Eigen::Index axis;
      es.eigenvectors().col(a).cwiseAbs().maxCoeff(&axis);
      if (static_cast<int>(axis) < best_axis) {
        best_axis = static_cast<int>(axis);
        best = a;
      }
    }
    const Eigen::Matrix<double, D, 1> e = es.eigenvectors().col(best);
    Eigen::Matrix3d t = Eigen::Matrix3d::Zero();
    t.topLeftCorner<D, D>() = std::max(0.0, top) * e * e.transpose();
    out.set(i, t);
  }
  return out;
}

}  // namespace

TissueMap::TissueMap(const Grid& grid, std::vector<Tissue> labels) : grid_(grid), labels_(std::move(labels)) {
  if (labels_.size() != grid_.size()) throw ConfigError("tissue map: label count does not match grid");
}

TissueMap::TissueMap(const Grid& grid, Tissue fill) : grid_(grid), labels_(grid.size(), fill) {}

std::size_t TissueMap::count(Tissue t) const { return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), t)); }

ScalarField TissueMap::to_field() const {
  ScalarField f(grid_);
  for (std::size_t i = 0; i < labels_.size(); ++i) f[i] = static_cast<double>(labels_[i]);
  return f;
}

TissueMap TissueMap::from_field(const ScalarField& f) {
  std::vector<Tissue> labels(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double v = f[i];
    if (v == 0.0) labels[i] = Tissue::Other;
    else if (v == 1.0) labels[i] = Tissue::Grey;
    else if (v == 2.0) labels[i] = Tissue::White;
    else throw ConfigError("tissue map: invalid label " + std::to_string(v) + " at voxel " + voxel_name(f.grid(), i));
  }
  return TissueMap(f.grid(), std::move(labels));
}

TensorMode parse_tensor_mode(const std::string& s) {
  if (s == "full_fa") return TensorMode::FullFa;
  if (s == "principal") return TensorMode::Principal;
  throw ConfigError("tensor_mode: expected full_fa or principal, got '" + s + "'");
}

std::string to_string(TensorMode mode) { return mode == TensorMode::FullFa ? "full_fa" : "principal"; }

void DiffusionParams::validate() const {
  if (!(k_g > 0.0)) throw ConfigError("k_g: must be positive");
  if (!(k_w >= k_g)) throw ConfigError("k_w: must be >= k_g");
  if (!(k_f >= 0.0) || !std::isfinite(k_f)) throw ConfigError("k_f: must be >= 0");
  if (!(penalty_eps > 0.0 && penalty_eps <= 1.0)) throw ConfigError("penalty_eps: must lie in (0, 1]");
}

double fractional_anisotropy(std::span<const double> lam) {
  if (lam.size() != 2 && lam.size() != 3) throw ConfigError("fractional_anisotropy: expected 2 or 3 eigenvalues");
  for (double l : lam) {
    if (l < 0.0 || !std::isfinite(l)) throw ConfigError("fractional_anisotropy: negative or non-finite eigenvalue");
  }
  double sq = 0.0;
  for (double l : lam) sq += l * l;
  if (sq == 0.0) return 0.0;
  if (lam.size() == 2) return std::abs(lam[0] - lam[1]) / std::sqrt(sq);
  const double d01 = lam[0] - lam[1], d12 = lam[1] - lam[2], d20 = lam[2] - lam[0];
  return std::sqrt(0.5) * std::sqrt(d01 * d01 + d12 * d12 + d20 * d20) / std::sqrt(sq);
}

TensorField build_tensor_full(const TensorField& dti) {
  return dti.grid().dim() == 2 ? full_impl<2>(dti) : full_impl<3>(dti);
}

TensorField build_tensor_principal(const TensorField& dti) {
  return dti.grid().dim() == 2 ? principal_impl<2>(dti) : principal_impl<3>(dti);
}

TensorField build_tensor(const TensorField& dti, TensorMode mode) {
  return mode == TensorMode::FullFa ? build_tensor_full(dti) : build_tensor_principal(dti);
}

TensorField DiffusionCoefficients::at(double k_f) const {
  return TensorField(base.grid(), base.values() + k_f * anisotropy.values());
}

DiffusionCoefficients diffusion_coefficients(const TissueMap& tissue, const TensorField& T,
                                             const DiffusionParams& params) {
  params.validate();
  require_same_grid(tissue.grid(), T.grid(), "assemble_K");
  if (tissue.brain_size() == 0) throw ConfigError("assemble_K: tissue map has no brain voxels");
  const Grid& g = tissue.grid();
  const int d = g.dim();
  DiffusionCoefficients k{TensorField(g), TensorField(g)};
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    double k0;
    switch (tissue[i]) {
      case Tissue::White: k0 = params.k_w; break;
      case Tissue::Grey: k0 = params.k_g; break;
      default: k0 = params.penalty_eps * params.k_g; break;
    }
    for (int a = 0; a < d; ++a) k.base.values()(row, tensor_component(d, a, a)) = k0;
    if (tissue.in_brain(i)) k.anisotropy.values().row(row) = T.values().row(row);
  }
  return k;
}

TensorField assemble_K(const TissueMap& tissue, const TensorField& T, const DiffusionParams& params) {
  return diffusion_coefficients(tissue, T, params).at(params.k_f);
}

AnatomySpec AnatomySpec::standard(const Grid& grid) {
  AnatomySpec s;
  const double fractions[3] = {0.42, 0.36, 0.36};
  double min_extent = grid.extent(0);
  for (int a = 0; a < grid.dim(); ++a) {
    s.center[a] = grid.origin(a) + 0.5 * grid.extent(a);
    s.radii[a] = fractions[a] * grid.extent(a);
    min_extent = std::min(min_extent, grid.extent(a));
  }
  s.grey_thickness = 0.08 * min_extent;
  return s;
}

Anatomy synth_anatomy(const Grid& grid, const AnatomySpec& spec) {
  const int d = grid.dim();
  for (int a = 0; a < d; ++a) {
    if (!(spec.radii[a] > grid.spacing(a))) throw ConfigError("synth_anatomy: degenerate ellipsoid radius");
  }
  if (spec.grey_thickness < 0.0) throw ConfigError("synth_anatomy: grey_thickness must be >= 0");
  if (!(spec.isotropic_floor >= 0.0) || !(spec.fiber_strength >= 0.0) || !(spec.jitter >= 0.0)) {
    throw ConfigError("synth_anatomy: tensor magnitudes must be >= 0");
  }
  Eigen::Vector3d dir = spec.fiber_direction;
  for (int a = d; a < 3; ++a) dir[a] = 0.0;
  if (spec.fiber == FiberPattern::Uniform && dir.norm() == 0.0) {
    throw ConfigError("synth_anatomy: fiber direction must be nonzero");
  }
  if (dir.norm() > 0.0) dir.normalize();

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Tissue> labels(grid.size(), Tissue::Other);
  TensorField dti(grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Eigen::Vector3d x = grid.position(i);
    double outer = 0.0, inner = 0.0;
    for (int a = 0; a < d; ++a) {
      const double r = x[a] - spec.center[a];
      outer += (r / spec.radii[a]) * (r / spec.radii[a]);
      const double ri = spec.radii[a] - spec.grey_thickness;
      inner += ri > 0.0 ? (r / ri) * (r / ri) : 2.0;
    }
    Eigen::Matrix3d t = spec.isotropic_floor * Eigen::Matrix3d::Identity();
    if (outer <= 1.0) {
      const bool white = inner <= 1.0;
      labels[i] = white ? Tissue::White : Tissue::Grey;
      if (white) {
        Eigen::Vector3d f = dir;
        if (spec.fiber == FiberPattern::Circular) {
          const Eigen::Vector3d r = x - spec.center;
          f = Eigen::Vector3d(-r[1], r[0], 0.0);
          f = f.norm() > 1e-12 ? Eigen::Vector3d(f.normalized()) : Eigen::Vector3d::UnitX();
        }
        t += spec.fiber_strength * f * f.transpose();
      }
    }
    if (spec.jitter > 0.0) {
      Eigen::Vector3d g(normal(rng), normal(rng), d == 3 ? normal(rng) : 0.0);
      if (g.norm() > 0.0) g.normalize();
      t += spec.jitter * g * g.transpose();
    }
    dti.set(i, t);
  }
  return Anatomy{TissueMap(grid, std::move(labels)), std::move(dti)};
}

}  // namespace glioma
