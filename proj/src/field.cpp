#include "glioma/field.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "glioma/errors.hpp"

namespace glioma {

Grid::Grid(std::vector<int> dims, std::vector<double> spacing, std::vector<double> origin) {
  if (dims.size() != 2 && dims.size() != 3) {
    throw ConfigError("grid: dimension must be 2 or 3, got " + std::to_string(dims.size()));
  }
  dim_ = static_cast<int>(dims.size());
  if (spacing.size() == 1) spacing.assign(dims.size(), spacing[0]);
  if (spacing.size() != dims.size()) throw ConfigError("grid: spacing count does not match dims");
  if (origin.empty()) origin.assign(dims.size(), 0.0);
  if (origin.size() != dims.size()) throw ConfigError("grid: origin count does not match dims");
  size_ = 1;
  for (int a = 0; a < dim_; ++a) {
    if (dims[a] < 4 || dims[a] % 2 != 0) {
      throw ConfigError("grid: dims must be even and >= 4 (axis " + std::to_string(a) + " has " +
                        std::to_string(dims[a]) + ")");
    }
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw ConfigError("grid: spacing must be positive");
    }
    dims_[a] = dims[a];
    spacing_[a] = spacing[a];
    origin_[a] = origin[a];
    size_ *= static_cast<std::size_t>(dims[a]);
  }
}

Grid Grid::cube(int dim, int n, double extent) {
  return Grid(std::vector<int>(dim, n), std::vector<double>(dim, extent / n));
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (int a = 0; a < dim_; ++a) v *= spacing_[a];
  return v;
}

std::array<int, 3> Grid::subscripts(std::size_t idx) const {
  std::array<int, 3> s{0, 0, 0};
  s[0] = static_cast<int>(idx % dims_[0]);
  idx /= dims_[0];
  s[1] = static_cast<int>(idx % dims_[1]);
  s[2] = static_cast<int>(idx / dims_[1]);
  return s;
}

Eigen::Vector3d Grid::position(std::size_t idx) const {
  const auto s = subscripts(idx);
  Eigen::Vector3d x = Eigen::Vector3d::Zero();
  for (int a = 0; a < dim_; ++a) x[a] = origin_[a] + s[a] * spacing_[a];
  return x;
}

std::size_t Grid::nearest(const Eigen::Vector3d& x) const {
  std::array<int, 3> s{0, 0, 0};
  for (int a = 0; a < dim_; ++a) {
    s[a] = std::clamp(static_cast<int>(std::lround((x[a] - origin_[a]) / spacing_[a])), 0, dims_[a] - 1);
  }
  return index(s[0], s[1], s[2]);
}

std::string Grid::describe() const {
  std::ostringstream os;
  for (int a = 0; a < dim_; ++a) os << (a ? "x" : "") << dims_[a];
  os << " (h=";
  for (int a = 0; a < dim_; ++a) os << (a ? "," : "") << spacing_[a];
  os << ")";
  return os.str();
}

bool Grid::operator==(const Grid& other) const {
  return dim_ == other.dim_ && dims_ == other.dims_ && spacing_ == other.spacing_ &&
         origin_ == other.origin_;
}

int tensor_component(int dim, int a, int b) {
  if (a > b) std::swap(a, b);
  if (dim == 2) return a == 0 ? b : 2;
  static constexpr int table[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};
  return table[a][b];
}

ScalarField::ScalarField(const Grid& grid, double fill)
    : grid_(grid), values_(Vector::Constant(static_cast<Eigen::Index>(grid.size()), fill)) {}

ScalarField::ScalarField(const Grid& grid, Vector values) : grid_(grid), values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.size()) != grid_.size()) {
    throw ConfigError("scalar field: value count does not match grid");
  }
}

VectorField::VectorField(const Grid& grid)
    : grid_(grid), values_(Matrix::Zero(static_cast<Eigen::Index>(grid.size()), grid.dim())) {}

VectorField::VectorField(const Grid& grid, Matrix values) : grid_(grid), values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.rows()) != grid_.size() || values_.cols() != grid_.dim()) {
    throw ConfigError("vector field: shape does not match grid");
  }
}

TensorField::TensorField(const Grid& grid)
    : grid_(grid),
      values_(Matrix::Zero(static_cast<Eigen::Index>(grid.size()), tensor_components(grid.dim()))) {}

TensorField::TensorField(const Grid& grid, Matrix values) : grid_(grid), values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.rows()) != grid_.size() ||
      values_.cols() != tensor_components(grid_.dim())) {
    throw ConfigError("tensor field: shape does not match grid");
  }
}

TensorField TensorField::isotropic(const Grid& grid, double s) {
  TensorField t(grid);
  for (int a = 0; a < grid.dim(); ++a) t.values_.col(tensor_component(grid.dim(), a, a)).setConstant(s);
  return t;
}

Eigen::Matrix3d TensorField::at(std::size_t voxel) const {
  const int d = grid_.dim();
  const auto row = static_cast<Eigen::Index>(voxel);
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) m(a, b) = values_(row, tensor_component(d, a, b));
  return m;
}

void TensorField::set(std::size_t voxel, const Eigen::Matrix3d& t) {
  const int d = grid_.dim();
  const auto row = static_cast<Eigen::Index>(voxel);
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) values_(row, tensor_component(d, a, b)) = 0.5 * (t(a, b) + t(b, a));
}

Vector TensorField::isotropic_part() const {
  const int d = grid_.dim();
  Vector tr = Vector::Zero(values_.rows());
  for (int a = 0; a < d; ++a) tr += values_.col(tensor_component(d, a, a));
  return tr / d;
}

void TimeGrid::validate() const {
  if (n_steps < 1) throw ConfigError("time grid: n_steps must be >= 1");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("time grid: horizon must be positive");
}

double weighted_dot(const Grid& grid, const Vector& a, const Vector& b) {
  return grid.cell_volume() * a.dot(b);
}

double weighted_norm(const Grid& grid, const Vector& a) {
  return std::sqrt(grid.cell_volume()) * a.norm();
}

double dot(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid(), b.grid(), "dot");
  return weighted_dot(a.grid(), a.values(), b.values());
}

double norm(const ScalarField& a) { return weighted_norm(a.grid(), a.values()); }

void require_finite(const Grid& grid, const Vector& values, const char* what) {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      const auto s = grid.subscripts(static_cast<std::size_t>(i));
      std::ostringstream os;
      os << what << ": non-finite value at voxel (" << s[0] << "," << s[1];
      if (grid.dim() == 3) os << "," << s[2];
      os << ")";
      throw NumericalError(os.str());
    }
  }
}

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (a != b) throw ConfigError(std::string(what) + ": grid mismatch (" + a.describe() + " vs " + b.describe() + ")");
}

}  // namespace glioma
