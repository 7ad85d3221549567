#include "glioma/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

#include "glioma/errors.hpp"

namespace glioma {
namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_complex* as_fftw(Complex* p) { return reinterpret_cast<fftw_complex*>(p); }

// Signed mode index for a full (non-halved) axis.
int signed_mode(int i, int n) { return i <= n / 2 ? i : i - n; }

}  // namespace

Spectral::Spectral(const Grid& grid) : grid_(grid) {
  const int d = grid.dim();
  const int nx = grid.n(0);
  const int half = nx / 2 + 1;
  nspec_ = static_cast<Eigen::Index>(half) * grid.n(1) * (d == 3 ? grid.n(2) : 1);

  k_.assign(d, Vector::Zero(nspec_));
  k2_ = Vector::Zero(nspec_);
  Eigen::Index idx = 0;
  for (int iz = 0; iz < (d == 3 ? grid.n(2) : 1); ++iz) {
    for (int iy = 0; iy < grid.n(1); ++iy) {
      for (int ix = 0; ix < half; ++ix, ++idx) {
        const int modes[3] = {ix, signed_mode(iy, grid.n(1)), d == 3 ? signed_mode(iz, grid.n(2)) : 0};
        const int raw[3] = {ix, iy, iz};
        for (int a = 0; a < d; ++a) {
          const bool nyquist = (raw[a] == grid.n(a) / 2);
          const double k = nyquist ? 0.0 : 2.0 * std::numbers::pi * modes[a] / grid.extent(a);
          k_[a][idx] = k;
          k2_[idx] += k * k;
        }
      }
    }
  }

  // FFTW is row-major with the last index fastest; x is our fastest axis.
  int n[3];
  for (int a = 0; a < d; ++a) n[a] = grid.n(d - 1 - a);
  std::vector<double> real_buf(grid.size());
  std::vector<Complex> spec_buf(static_cast<std::size_t>(nspec_));
  std::lock_guard<std::mutex> lock(planner_mutex());
  plan_r2c_ = fftw_plan_dft_r2c(d, n, real_buf.data(), as_fftw(spec_buf.data()),
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
  plan_c2r_ = fftw_plan_dft_c2r(d, n, as_fftw(spec_buf.data()), real_buf.data(),
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!plan_r2c_ || !plan_c2r_) throw NumericalError("fftw: plan creation failed for " + grid.describe());
}

Spectral::~Spectral() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (plan_r2c_) fftw_destroy_plan(static_cast<fftw_plan>(plan_r2c_));
  if (plan_c2r_) fftw_destroy_plan(static_cast<fftw_plan>(plan_c2r_));
}

std::shared_ptr<const Spectral> Spectral::of(const Grid& grid) {
  static std::mutex cache_mutex;
  static std::vector<std::shared_ptr<const Spectral>> cache;
  std::lock_guard<std::mutex> lock(cache_mutex);
  for (const auto& s : cache) {
    const Grid& g = s->grid();
    bool same = g.dim() == grid.dim();
    for (int a = 0; same && a < grid.dim(); ++a) same = g.n(a) == grid.n(a) && g.spacing(a) == grid.spacing(a);
    if (same) return s;
  }
  cache.push_back(std::make_shared<const Spectral>(grid));
  return cache.back();
}

void Spectral::forward(const Vector& in, ComplexVector& out) const {
  out.resize(nspec_);
  // r2c does not modify its input under FFTW_ESTIMATE, but the API takes a non-const pointer.
  fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_r2c_), const_cast<double*>(in.data()), as_fftw(out.data()));
}

void Spectral::inverse(const ComplexVector& in, Vector& out) const {
  ComplexVector scratch = in;  // c2r destroys its input
  out.resize(static_cast<Eigen::Index>(grid_.size()));
  fftw_execute_dft_c2r(static_cast<fftw_plan>(plan_c2r_), as_fftw(scratch.data()), out.data());
  out /= static_cast<double>(grid_.size());
}

Matrix Spectral::gradient(const Vector& f) const {
  const int d = grid_.dim();
  ComplexVector fh;
  forward(f, fh);
  Matrix g(f.size(), d);
  ComplexVector work(nspec_);
  Vector col;
  for (int a = 0; a < d; ++a) {
    work = fh.cwiseProduct(k_[a].cast<Complex>()) * Complex(0.0, 1.0);
    inverse(work, col);
    g.col(a) = col;
  }
  return g;
}

Vector Spectral::divergence(const Matrix& v) const {
  const int d = grid_.dim();
  ComplexVector acc = ComplexVector::Zero(nspec_);
  ComplexVector vh;
  Vector col;
  for (int a = 0; a < d; ++a) {
    col = v.col(a);
    forward(col, vh);
    acc += vh.cwiseProduct(k_[a].cast<Complex>());
  }
  acc *= Complex(0.0, 1.0);
  Vector out;
  inverse(acc, out);
  return out;
}

Vector Spectral::diffusion(const Vector& c, const Matrix& K) const {
  const int d = grid_.dim();
  const Matrix g = gradient(c);
  Matrix flux(g.rows(), d);
  for (int a = 0; a < d; ++a) {
    auto col = flux.col(a);
    col.setZero();
    for (int b = 0; b < d; ++b) {
      col.array() += K.col(tensor_component(d, a, b)).array() * g.col(b).array();
    }
  }
  return divergence(flux);
}

Vector Spectral::multiply(const Vector& f, const std::function<double(double)>& symbol) const {
  Vector m(nspec_);
  for (Eigen::Index i = 0; i < nspec_; ++i) m[i] = symbol(k2_[i]);
  return multiply(f, m);
}

Vector Spectral::multiply(const Vector& f, const Vector& symbol) const {
  ComplexVector fh;
  forward(f, fh);
  fh = fh.cwiseProduct(symbol.cast<Complex>());
  Vector out;
  inverse(fh, out);
  return out;
}

VectorField spectral_gradient(const ScalarField& f) {
  require_finite(f.grid(), f.values(), "spectral_gradient");
  return VectorField(f.grid(), Spectral::of(f.grid())->gradient(f.values()));
}

ScalarField spectral_divergence(const VectorField& v) {
  for (int a = 0; a < v.grid().dim(); ++a) require_finite(v.grid(), v.values().col(a), "spectral_divergence");
  return ScalarField(v.grid(), Spectral::of(v.grid())->divergence(v.values()));
}

ScalarField apply_diffusion(const ScalarField& c, const TensorField& K) {
  require_same_grid(c.grid(), K.grid(), "apply_diffusion");
  require_finite(c.grid(), c.values(), "apply_diffusion");
  return ScalarField(c.grid(), Spectral::of(c.grid())->diffusion(c.values(), K.values()));
}

}  // namespace glioma
