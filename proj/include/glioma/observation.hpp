#pragma once

#include "glioma/field.hpp"

namespace glioma {

/// Diagonal 0/1 projector O: keeps voxels whose generating datum reached the threshold.
class ObservationMask {
 public:
  ObservationMask() = default;
  ObservationMask(const Grid& grid, Vector indicator, double threshold);

  /// Voxel true iff field >= c_d.
  static ObservationMask from_threshold(const ScalarField& field, double c_d);
  static ObservationMask full(const Grid& grid);
  static ObservationMask empty(const Grid& grid);

  const Grid& grid() const { return grid_; }
  double threshold() const { return threshold_; }
  bool operator[](std::size_t i) const { return indicator_[static_cast<Eigen::Index>(i)] != 0.0; }
  std::size_t count() const;
  const Vector& indicator() const { return indicator_; }

  Vector apply(const Vector& v) const { return indicator_.cwiseProduct(v); }

 private:
  Grid grid_;
  Vector indicator_;
  double threshold_ = 0.0;
};

/// O c: zero outside the mask. Idempotent, and O^T O = O.
ScalarField observe(const ObservationMask& mask, const ScalarField& c);

}  // namespace glioma
