#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "glioma/field.hpp"

namespace glioma {

enum class Tissue : std::uint8_t { Other = 0, Grey = 1, White = 2 };

/// Tissue label per voxel. Non-OTHER voxels form the brain domain.
class TissueMap {
 public:
  TissueMap() = default;
  TissueMap(const Grid& grid, std::vector<Tissue> labels);
  TissueMap(const Grid& grid, Tissue fill);

  const Grid& grid() const { return grid_; }
  Tissue operator[](std::size_t i) const { return labels_[i]; }
  Tissue& operator[](std::size_t i) { return labels_[i]; }
  bool in_brain(std::size_t i) const { return labels_[i] != Tissue::Other; }
  std::size_t count(Tissue t) const;
  std::size_t brain_size() const { return grid_.size() - count(Tissue::Other); }

  /// Labels as reals (0 other, 1 grey, 2 white) for volume I/O.
  ScalarField to_field() const;
  static TissueMap from_field(const ScalarField& f);

 private:
  Grid grid_;
  std::vector<Tissue> labels_;
};

enum class TensorMode { FullFa, Principal };

TensorMode parse_tensor_mode(const std::string& s);
std::string to_string(TensorMode mode);

/// Tumor diffusion rates (nondimensional) and the fictitious-domain penalty.
struct DiffusionParams {
  double k_g = 0.02;
  double k_w = 0.1;
  double k_f = 0.0;
  TensorMode tensor_mode = TensorMode::FullFa;
  double penalty_eps = 1e-3;

  void validate() const;
};

/// FA of a 2- or 3-eigenvalue spectrum; 0 for the all-zero tensor.
double fractional_anisotropy(std::span<const double> eigenvalues);

/// T = FA * DTI per voxel.
TensorField build_tensor_full(const TensorField& dti);
/// T = lambda_1 e_1 e_1^T per voxel.
TensorField build_tensor_principal(const TensorField& dti);
TensorField build_tensor(const TensorField& dti, TensorMode mode);

/// K(k_f) = base + k_f * anisotropy, split so that derivatives in k_f are available.
struct DiffusionCoefficients {
  TensorField base;        // k_0(x) I inside the brain, eps * k_g * I outside
  TensorField anisotropy;  // T(x) inside the brain, 0 outside

  TensorField at(double k_f) const;
};

DiffusionCoefficients diffusion_coefficients(const TissueMap& tissue, const TensorField& T,
                                             const DiffusionParams& params);
TensorField assemble_K(const TissueMap& tissue, const TensorField& T, const DiffusionParams& params);

enum class FiberPattern { Uniform, Circular };

/// Geometry of a synthetic brain: ellipsoidal grey shell around a white core.
struct AnatomySpec {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d radii = Eigen::Vector3d::Ones();
  double grey_thickness = 0.0;
  FiberPattern fiber = FiberPattern::Uniform;
  Eigen::Vector3d fiber_direction = Eigen::Vector3d::UnitX();
  double fiber_strength = 0.8;  // added along the fiber in white matter
  double isotropic_floor = 0.2;
  double jitter = 0.0;  // random rank-one perturbation magnitude
  std::uint64_t seed = 1;

  /// Centered ellipsoid filling most of the grid.
  static AnatomySpec standard(const Grid& grid);
};

struct Anatomy {
  TissueMap tissue;
  TensorField dti;
};

Anatomy synth_anatomy(const Grid& grid, const AnatomySpec& spec);

}  // namespace glioma
