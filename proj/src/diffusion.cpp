#include "glioma/diffusion.hpp"

#include <sstream>

#include "glioma/errors.hpp"

namespace glioma {

CrankNicolsonDiffusion::CrankNicolsonDiffusion(const DiffusionCoefficients& coeffs, double k_f, double dt,
                                               CgOptions cg)
    : K_(coeffs.at(k_f)), T_(coeffs.anisotropy), has_anisotropy_(true), weight_(dt / 4.0), cg_(cg) {
  init();
}

CrankNicolsonDiffusion::CrankNicolsonDiffusion(const TensorField& K, double dt, CgOptions cg)
    : K_(K), weight_(dt / 4.0), cg_(cg) {
  init();
}

void CrankNicolsonDiffusion::init() {
  if (!(weight_ > 0.0)) throw ConfigError("diffusion: dt must be positive");
  spectral_ = Spectral::of(K_.grid());
  const double kbar = K_.isotropic_part().mean();
  const double s = weight_;
  precond_symbol_ = (1.0 + s * kbar * spectral_->wavenumber_squared().array()).inverse().matrix();
}

Vector CrankNicolsonDiffusion::solve(const Vector& rhs) const {
  Vector x = rhs;
  const auto apply_A = [&](const Vector& v) -> Vector { return v - weight_ * apply(v); };
  const auto precond = [&](const Vector& r) -> Vector { return spectral_->multiply(r, precond_symbol_); };
  const CgResult res = pcg(apply_A, precond, rhs, x, cg_);
  if (!res.converged) {
    std::ostringstream os;
    os << "diffusion: CG did not converge in " << res.iterations << " iterations (relative residual "
       << res.rel_residual << ")";
    throw NumericalError(os.str());
  }
  return x;
}

Vector CrankNicolsonDiffusion::explicit_part(const Vector& x) const { return x + weight_ * apply(x); }

Vector CrankNicolsonDiffusion::anisotropic(const Vector& x) const {
  if (!has_anisotropy_) return Vector::Zero(x.size());
  return spectral_->diffusion(x, T_.values());
}

SpectralDiffusion::SpectralDiffusion(const Grid& grid, double k0, double t, double k_f, double dt)
    : grid_(grid), k0_(k0), t_(t), k_f_(k_f), weight_(dt / 4.0), spectral_(Spectral::of(grid)) {
  if (!(weight_ > 0.0)) throw ConfigError("diffusion: dt must be positive");
  const auto k2 = spectral_->wavenumber_squared().array();
  const double k = kbar();
  solve_symbol_ = (1.0 + weight_ * k * k2).inverse().matrix();
  explicit_symbol_ = (1.0 - weight_ * k * k2).matrix();
  anisotropic_symbol_ = (-t_ * k2).matrix();
}

SpectralDiffusion SpectralDiffusion::averaged(const DiffusionCoefficients& coeffs, const TissueMap& tissue,
                                              double k_f, double dt) {
  return SpectralDiffusion(coeffs.base.grid(), brain_average_isotropic(coeffs.base, tissue),
                           brain_average_isotropic(coeffs.anisotropy, tissue), k_f, dt);
}

Vector SpectralDiffusion::solve(const Vector& rhs) const { return spectral_->multiply(rhs, solve_symbol_); }

Vector SpectralDiffusion::explicit_part(const Vector& x) const { return spectral_->multiply(x, explicit_symbol_); }

Vector SpectralDiffusion::anisotropic(const Vector& x) const { return spectral_->multiply(x, anisotropic_symbol_); }

double brain_average_isotropic(const TensorField& K, const TissueMap& tissue) {
  require_same_grid(K.grid(), tissue.grid(), "brain_average_isotropic");
  if (tissue.brain_size() == 0) throw ConfigError("brain average: tissue map has no brain voxels");
  const Vector iso = K.isotropic_part();
  double sum = 0.0;
  for (std::size_t i = 0; i < tissue.grid().size(); ++i) {
    if (tissue.in_brain(i)) sum += iso[static_cast<Eigen::Index>(i)];
  }
  return sum / static_cast<double>(tissue.brain_size());
}

}  // namespace glioma
