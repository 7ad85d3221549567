#include <doctest.h>

#include "fixtures.hpp"

using namespace glioma;
using namespace glioma::testing;

namespace {

ScalarField sine_x(const Grid& g, int mode = 1) {
  ScalarField f(g);
  for (std::size_t v = 0; v < g.size(); ++v) f[v] = std::sin(2.0 * M_PI * mode * g.position(v)[0] / g.extent(0));
  return f;
}

/// Band-limited random field: a handful of low Fourier modes with random amplitudes.
ScalarField smooth_random(const Grid& g, std::mt19937_64& rng, int max_mode = 3) {
  std::normal_distribution<double> n(0.0, 1.0);
  ScalarField f(g);
  for (int m = 0; m < 6; ++m) {
    std::uniform_int_distribution<int> k(-max_mode, max_mode);
    Eigen::Vector3d kv(k(rng), k(rng), g.dim() == 3 ? k(rng) : 0);
    const double a = n(rng), phase = n(rng);
    for (std::size_t v = 0; v < g.size(); ++v) {
      const Eigen::Vector3d x = g.position(v);
      double arg = phase;
      for (int d = 0; d < g.dim(); ++d) arg += 2.0 * M_PI * kv[d] * x[d] / g.extent(d);
      f[v] += a * std::cos(arg);
    }
  }
  return f;
}

}  // namespace

TEST_CASE("gradient of a constant vanishes") {
  const Grid g = Grid::cube(3, 8, 1.0);
  const VectorField grad = spectral_gradient(ScalarField(g, 7.0));
  CHECK(grad.values().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient of a sine matches the analytic derivative") {
  const Grid g = Grid::cube(2, 64, 3.0);
  const ScalarField f = sine_x(g);
  const VectorField grad = spectral_gradient(f);
  const double k = 2.0 * M_PI / 3.0;
  double err = 0.0;
  for (std::size_t v = 0; v < g.size(); ++v) {
    err = std::max(err, std::abs(grad.values()(static_cast<Eigen::Index>(v), 0) - k * std::cos(k * g.position(v)[0])));
  }
  CHECK(err < 1e-10);
  CHECK(grad.values().col(1).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("gradient of a band-limited field agrees with fourth-order differences") {
  std::mt19937_64 rng(3);
  double prev = 0.0;
  for (int n : {32, 64}) {
    const Grid g = Grid::cube(2, n, 1.0);
    const ScalarField f = smooth_random(g, rng = std::mt19937_64(3));
    const VectorField grad = spectral_gradient(f);
    const double h = g.spacing(0);
    double err = 0.0;
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const auto at = [&](int di) { return f[g.index((i + di + n) % n, j)]; };
        const double fd = (-at(2) + 8 * at(1) - 8 * at(-1) + at(-2)) / (12 * h);
        err = std::max(err, std::abs(fd - grad.values()(static_cast<Eigen::Index>(g.index(i, j)), 0)));
      }
    }
    if (prev > 0.0) CHECK(prev / err > 12.0);  // O(h^4): ideal ratio 16
    prev = err;
  }
}

TEST_CASE("divergence is the negative adjoint of the gradient") {
  std::mt19937_64 rng(9);
  for (int dim : {2, 3}) {
    const Grid g = Grid::cube(dim, dim == 2 ? 16 : 8, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
      const ScalarField f(g, random_vector(static_cast<Eigen::Index>(g.size()), rng));
      Matrix vm(static_cast<Eigen::Index>(g.size()), dim);
      for (int a = 0; a < dim; ++a) vm.col(a) = random_vector(vm.rows(), rng);
      const VectorField v(g, vm);
      const double lhs = (spectral_gradient(f).values().array() * vm.array()).sum();
      const double rhs = f.values().dot(spectral_divergence(v).values());
      CHECK(std::abs(lhs + rhs) < 1e-10 * f.values().norm() * vm.norm());
    }
  }
}

TEST_CASE("divergence of a gradient sine is the analytic Laplacian") {
  const Grid g = Grid::cube(2, 32, 2.0);
  const ScalarField f = sine_x(g, 2);
  const ScalarField lap = spectral_divergence(spectral_gradient(f));
  const double k = 2.0 * M_PI * 2 / 2.0;
  CHECK((lap.values() + k * k * f.values()).cwiseAbs().maxCoeff() < 1e-10);
  Matrix c(static_cast<Eigen::Index>(g.size()), 2);
  c.col(0).setConstant(1.5);
  c.col(1).setConstant(-0.5);
  CHECK(spectral_divergence(VectorField(g, c)).values().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("transform round trip") {
  std::mt19937_64 rng(1);
  const Grid g = Grid::cube(3, 8, 1.0);
  const auto sp = Spectral::of(g);
  const Vector f = random_vector(static_cast<Eigen::Index>(g.size()), rng);
  ComplexVector fh;
  sp->forward(f, fh);
  Vector back;
  sp->inverse(fh, back);
  CHECK((back - f).norm() < 1e-12 * f.norm());
}

TEST_CASE("apply_diffusion: constants, closed form, symmetry, definiteness") {
  const Grid g = Grid::cube(2, 32, 2.0);
  CHECK(apply_diffusion(ScalarField(g, 3.0), TensorField::isotropic(g, 0.3)).values().cwiseAbs().maxCoeff() < 1e-12);
  const ScalarField s = sine_x(g);
  const double k = 2.0 * M_PI / 2.0;
  CHECK((apply_diffusion(s, TensorField::isotropic(g, 0.3)).values() + 0.3 * k * k * s.values()).cwiseAbs().maxCoeff() <
        1e-10);

  std::mt19937_64 rng(4);
  TensorField K(g);
  for (std::size_t v = 0; v < g.size(); ++v) {
    const Eigen::Vector3d x = g.position(v);
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
    const Eigen::Vector3d dir(std::cos(x[0]), std::sin(x[1]), 0.0);
    m.topLeftCorner<2, 2>() = (0.1 + 0.05 * std::sin(x[1])) * Eigen::Matrix2d::Identity() +
                              0.2 * dir.head<2>() * dir.head<2>().transpose();
    K.set(v, m);
  }
  for (int t = 0; t < 20; ++t) {
    const ScalarField c(g, random_vector(static_cast<Eigen::Index>(g.size()), rng));
    const ScalarField w(g, random_vector(static_cast<Eigen::Index>(g.size()), rng));
    const double a = dot(apply_diffusion(c, K), w), b = dot(c, apply_diffusion(w, K));
    CHECK(std::abs(a - b) <= 1e-9 * norm(c) * norm(w));
    CHECK(dot(apply_diffusion(c, K), c) <= 1e-9 * norm(c) * norm(c));
  }
}

TEST_CASE("apply_diffusion matches dense assembly from spectral derivative matrices") {
  // Oracle: dense first-derivative matrices built from the DFT of unit vectors along each axis.
  const int n = 8;
  const Grid g = Grid::cube(3, n, 1.0);
  const auto N = static_cast<Eigen::Index>(g.size());
  std::vector<Matrix> Dx(3, Matrix::Zero(N, N));
  Eigen::MatrixXd d1 = Eigen::MatrixXd::Zero(n, n);
  const double L = 1.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int m = -n / 2 + 1; m < n / 2; ++m) {  // Nyquist excluded
        const double k = 2.0 * M_PI * m / L;
        s += -k * std::sin(k * (i - j) * L / n);
      }
      d1(i, j) = s / n;
    }
  }
  for (std::size_t a = 0; a < g.size(); ++a) {
    const auto sa = g.subscripts(a);
    for (int q = 0; q < n; ++q) {
      for (int axis = 0; axis < 3; ++axis) {
        auto sb = sa;
        sb[axis] = q;
        Dx[axis](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(g.index(sb[0], sb[1], sb[2]))) =
            d1(sa[axis], q);
      }
    }
  }
  std::mt19937_64 rng(8);
  TensorField K(g);
  for (std::size_t v = 0; v < g.size(); ++v) {
    const Eigen::Vector3d r = random_vector(3, rng);
    K.set(v, 0.1 * Eigen::Matrix3d::Identity() + r * r.transpose());
  }
  Matrix D = Matrix::Zero(N, N);
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const Vector kab = K.values().col(tensor_component(3, a, b));
      D += Dx[a] * kab.asDiagonal() * Dx[b];
    }
  }
  const Vector c = random_vector(N, rng);
  const Vector ref = D * c;
  const Vector got = apply_diffusion(ScalarField(g, c), K).values();
  CHECK((got - ref).norm() < 1e-6 * ref.norm());
}
