#pragma once

#include <complex>
#include <functional>
#include <memory>
#include <vector>

#include "glioma/field.hpp"

namespace glioma {

using Complex = std::complex<double>;
using ComplexVector = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;

/// Real-to-complex FFT machinery and Fourier multipliers for one periodic grid.
///
/// Plans are created once per grid shape and shared; execution uses the
/// new-array interface so one instance can serve concurrent callers.
/// The Nyquist mode of every first derivative is zeroed, which makes the
/// discrete divergence exactly the negative transpose of the gradient.
class Spectral {
 public:
  explicit Spectral(const Grid& grid);
  ~Spectral();
  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;

  /// Shared instance for `grid` (keyed on dims and spacing).
  static std::shared_ptr<const Spectral> of(const Grid& grid);

  const Grid& grid() const { return grid_; }
  Eigen::Index spectrum_size() const { return nspec_; }

  void forward(const Vector& in, ComplexVector& out) const;
  /// Inverse transform including the 1/N normalization.
  void inverse(const ComplexVector& in, Vector& out) const;

  /// Angular wavenumber along `axis` per spectral coefficient, Nyquist zeroed.
  const Vector& wavenumber(int axis) const { return k_[axis]; }
  /// Sum of squared (Nyquist-zeroed) wavenumbers, i.e. the symbol of -div grad.
  const Vector& wavenumber_squared() const { return k2_; }

  Matrix gradient(const Vector& f) const;
  Vector divergence(const Matrix& v) const;
  /// div(K grad c) with K in upper-triangle storage.
  Vector diffusion(const Vector& c, const Matrix& tensor) const;
  /// Applies the Fourier multiplier m(|k|^2) to f.
  Vector multiply(const Vector& f, const std::function<double(double)>& symbol) const;
  /// Applies a precomputed real multiplier (one entry per spectral coefficient).
  Vector multiply(const Vector& f, const Vector& symbol) const;

 private:
  Grid grid_;
  Eigen::Index nspec_ = 0;
  std::vector<Vector> k_;
  Vector k2_;
  void* plan_r2c_ = nullptr;
  void* plan_c2r_ = nullptr;
};

VectorField spectral_gradient(const ScalarField& f);
ScalarField spectral_divergence(const VectorField& v);
/// div(K grad c); self-adjoint, and negative semi-definite for PSD K.
ScalarField apply_diffusion(const ScalarField& c, const TensorField& K);

}  // namespace glioma
