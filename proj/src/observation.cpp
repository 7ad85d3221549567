#include "glioma/observation.hpp"

#include "glioma/errors.hpp"

namespace glioma {

ObservationMask::ObservationMask(const Grid& grid, Vector indicator, double threshold)
    : grid_(grid), indicator_(std::move(indicator)), threshold_(threshold) {
  if (static_cast<std::size_t>(indicator_.size()) != grid_.size()) {
    throw ConfigError("observation mask: size does not match grid");
  }
  for (Eigen::Index i = 0; i < indicator_.size(); ++i) {
    if (indicator_[i] != 0.0 && indicator_[i] != 1.0) throw ConfigError("observation mask: entries must be 0 or 1");
  }
}

ObservationMask ObservationMask::from_threshold(const ScalarField& field, double c_d) {
  Vector ind = (field.values().array() >= c_d).cast<double>().matrix();
  return ObservationMask(field.grid(), std::move(ind), c_d);
}

ObservationMask ObservationMask::full(const Grid& grid) {
  return ObservationMask(grid, Vector::Ones(static_cast<Eigen::Index>(grid.size())), 0.0);
}

ObservationMask ObservationMask::empty(const Grid& grid) {
  return ObservationMask(grid, Vector::Zero(static_cast<Eigen::Index>(grid.size())), 0.0);
}

std::size_t ObservationMask::count() const { return static_cast<std::size_t>(indicator_.sum()); }

ScalarField observe(const ObservationMask& mask, const ScalarField& c) {
  require_same_grid(mask.grid(), c.grid(), "observe");
  return ScalarField(c.grid(), mask.apply(c.values()));
}

}  // namespace glioma
