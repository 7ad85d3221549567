#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace glioma {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Regular voxel grid on a periodic box. Axis 0 (x) varies fastest in memory.
class Grid {
 public:
  Grid() = default;
  Grid(std::vector<int> dims, std::vector<double> spacing, std::vector<double> origin = {});

  /// Cube with `n` points per axis covering `[0, extent)`.
  static Grid cube(int dim, int n, double extent);

  int dim() const { return dim_; }
  int n(int axis) const { return dims_[axis]; }
  double spacing(int axis) const { return spacing_[axis]; }
  double origin(int axis) const { return origin_[axis]; }
  double extent(int axis) const { return dims_[axis] * spacing_[axis]; }
  std::size_t size() const { return size_; }
  /// Quadrature weight h^d of a single voxel.
  double cell_volume() const;

  std::size_t index(int i, int j, int k = 0) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_[0]) * (static_cast<std::size_t>(j) +
                                                 static_cast<std::size_t>(dims_[1]) * k);
  }
  std::array<int, 3> subscripts(std::size_t idx) const;
  /// Physical coordinates of a voxel; unused axes are zero.
  Eigen::Vector3d position(std::size_t idx) const;
  /// Voxel whose position is closest to x, clamped to the grid.
  std::size_t nearest(const Eigen::Vector3d& x) const;

  std::vector<int> dims() const { return {dims_.begin(), dims_.begin() + dim_}; }
  std::string describe() const;

  bool operator==(const Grid& other) const;
  bool operator!=(const Grid& other) const { return !(*this == other); }

 private:
  int dim_ = 0;
  std::array<int, 3> dims_{1, 1, 1};
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
  std::array<double, 3> origin_{0.0, 0.0, 0.0};
  std::size_t size_ = 0;
};

/// Number of stored upper-triangle components of a symmetric d x d tensor.
constexpr int tensor_components(int dim) { return dim * (dim + 1) / 2; }

/// Column of component (a, b) in upper-triangle storage: xx, xy, (xz), yy, (yz), (zz).
int tensor_component(int dim, int a, int b);

class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(const Grid& grid, double fill = 0.0);
  ScalarField(const Grid& grid, Vector values);

  const Grid& grid() const { return grid_; }
  const Vector& values() const { return values_; }
  Vector& values() { return values_; }
  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }
  double& operator[](std::size_t i) { return values_[static_cast<Eigen::Index>(i)]; }
  std::size_t size() const { return grid_.size(); }

 private:
  Grid grid_;
  Vector values_;
};

/// d components per voxel, stored column-per-component.
class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(const Grid& grid);
  VectorField(const Grid& grid, Matrix values);

  const Grid& grid() const { return grid_; }
  const Matrix& values() const { return values_; }
  Matrix& values() { return values_; }
  auto component(int a) const { return values_.col(a); }
  auto component(int a) { return values_.col(a); }

 private:
  Grid grid_;
  Matrix values_;
};

/// Symmetric d x d tensor per voxel in upper-triangle storage (one column per component).
class TensorField {
 public:
  TensorField() = default;
  explicit TensorField(const Grid& grid);
  TensorField(const Grid& grid, Matrix values);

  /// s * I at every voxel.
  static TensorField isotropic(const Grid& grid, double s);

  const Grid& grid() const { return grid_; }
  const Matrix& values() const { return values_; }
  Matrix& values() { return values_; }
  int components() const { return static_cast<int>(values_.cols()); }

  Eigen::Matrix3d at(std::size_t voxel) const;  // padded with zeros in 2D
  void set(std::size_t voxel, const Eigen::Matrix3d& t);

  /// Per-voxel trace / d.
  Vector isotropic_part() const;

 private:
  Grid grid_;
  Matrix values_;
};

/// Uniform time stepping on [0, horizon].
struct TimeGrid {
  int n_steps = 10;
  double horizon = 1.0;

  double dt() const { return horizon / n_steps; }
  void validate() const;
};

// Discrete L2 inner product and norm with quadrature weight h^d.
double dot(const ScalarField& a, const ScalarField& b);
double norm(const ScalarField& a);
double weighted_dot(const Grid& grid, const Vector& a, const Vector& b);
double weighted_norm(const Grid& grid, const Vector& a);

/// Throws NumericalError naming the first non-finite voxel.
void require_finite(const Grid& grid, const Vector& values, const char* what);

void require_same_grid(const Grid& a, const Grid& b, const char* what);

}  // namespace glioma
