#pragma once

#include <memory>

#include "glioma/anatomy.hpp"
#include "glioma/krylov.hpp"
#include "glioma/spectral.hpp"

namespace glioma {

/// One Crank-Nicolson half step of dc/dt = div(K grad c) over dt/2:
///   (I - s D) c_out = (I + s D) c_in,  s = dt / 4,
/// with D = D_0 + k_f D_T and D_T = div(T grad .).
/// Implementations differ only in how D and the implicit solve are realized.
class DiffusionPropagator {
 public:
  virtual ~DiffusionPropagator() = default;

  virtual const Grid& grid() const = 0;
  /// s = dt / 4.
  virtual double weight() const = 0;
  /// (I - s D)^{-1} rhs.
  virtual Vector solve(const Vector& rhs) const = 0;
  /// (I + s D) x.
  virtual Vector explicit_part(const Vector& x) const = 0;
  /// D_T x, the derivative of D x with respect to k_f.
  virtual Vector anisotropic(const Vector& x) const = 0;

  Vector half_step(const Vector& x) const { return solve(explicit_part(x)); }
};

/// Variable-coefficient pseudo-spectral operator; the implicit system is solved
/// by CG preconditioned with the exact inverse of (I - s kbar Laplacian).
class CrankNicolsonDiffusion final : public DiffusionPropagator {
 public:
  CrankNicolsonDiffusion(const DiffusionCoefficients& coeffs, double k_f, double dt, CgOptions cg = {});
  /// Isotropic-only convenience: K given directly, D_T = 0.
  CrankNicolsonDiffusion(const TensorField& K, double dt, CgOptions cg = {});

  const Grid& grid() const override { return K_.grid(); }
  double weight() const override { return weight_; }
  Vector solve(const Vector& rhs) const override;
  Vector explicit_part(const Vector& x) const override;
  Vector anisotropic(const Vector& x) const override;

  /// D x with the full tensor.
  Vector apply(const Vector& x) const { return spectral_->diffusion(x, K_.values()); }
  const TensorField& tensor() const { return K_; }
  const CgOptions& cg_options() const { return cg_; }

 private:
  void init();

  TensorField K_;
  TensorField T_;
  bool has_anisotropy_ = false;
  double weight_;
  CgOptions cg_;
  std::shared_ptr<const Spectral> spectral_;
  Vector precond_symbol_;
};

/// Constant isotropic surrogate K = (k0 + k_f t) I; every operation is a Fourier multiplier.
class SpectralDiffusion final : public DiffusionPropagator {
 public:
  SpectralDiffusion(const Grid& grid, double k0, double t, double k_f, double dt);

  /// Brain-averaged isotropic parts of the base tensor and of T.
  static SpectralDiffusion averaged(const DiffusionCoefficients& coeffs, const TissueMap& tissue, double k_f,
                                    double dt);

  const Grid& grid() const override { return grid_; }
  double weight() const override { return weight_; }
  Vector solve(const Vector& rhs) const override;
  Vector explicit_part(const Vector& x) const override;
  Vector anisotropic(const Vector& x) const override;

  double kbar() const { return k0_ + k_f_ * t_; }

 private:
  Grid grid_;
  double k0_, t_, k_f_;
  double weight_;
  std::shared_ptr<const Spectral> spectral_;
  Vector solve_symbol_, explicit_symbol_, anisotropic_symbol_;
};

/// Brain-average of the isotropic part of a tensor field.
double brain_average_isotropic(const TensorField& K, const TissueMap& tissue);

}  // namespace glioma
