#include "glioma/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "glioma/errors.hpp"

namespace glioma {

namespace {

constexpr double kMarginCutoff = 0.01;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

TestCaseSpec TestCaseSpec::preset(int case_id, std::vector<int> dims) {
  if (case_id < 1 || case_id > 4) throw ConfigError("case: expected 1, 2, 3 or 4");
  TestCaseSpec s;
  s.case_id = case_id;
  s.dims = std::move(dims);
  s.tensor_mode = case_id == 4 ? TensorMode::Principal : TensorMode::FullFa;
  s.invert_kf = case_id != 1;
  if (case_id == 1) s.c_d_list = {0.1, 0.2, 0.4};
  if (case_id == 3) {
    s.foci = {Focus{{0.33, 0.62, 0.5}, 1.0, 0.06}, Focus{{0.64, 0.40, 0.5}, 1.0, 0.06}};
    s.basis_per_axis = 7;
  } else {
    s.foci = {Focus{{0.40, 0.56, 0.5}, 2.0, 0.065}};
  }
  s.seed = static_cast<std::uint64_t>(case_id);
  return s;
}

Grid TestCaseSpec::grid() const {
  if (dims.size() != 2 && dims.size() != 3) throw ConfigError("grid: expected 2 or 3 dimensions");
  std::vector<double> spacing;
  for (int n : dims) spacing.push_back(extent / std::max(n, 1));
  return Grid(dims, spacing);
}

AnatomySpec TestCaseSpec::anatomy_spec() const {
  AnatomySpec a = AnatomySpec::standard(grid());
  a.fiber = fiber;
  a.fiber_strength = fiber_strength;
  a.jitter = anatomy_jitter;
  a.seed = seed;
  return a;
}

void TestCaseSpec::validate() const {
  if (foci.empty()) throw ConfigError("case: at least one focus required");
  if (case_id == 3 && foci.size() < 2) throw ConfigError("case: multifocal case needs at least 2 foci");
  if (case_id == 1 && invert_kf) throw ConfigError("case: case 1 keeps k_f fixed");
  if (!(kf_true > 0.0)) throw ConfigError("kf: true k_f must be positive");
  if (!(kf_init >= 0.0)) throw ConfigError("kf_init: must be nonnegative");
  for (double c : c_d_list) {
    if (!(c >= 0.0 && c < 1.0)) throw ConfigError("cd: values must lie in [0, 1)");
  }
  for (double e : eta_list) {
    if (!(e >= 0.0)) throw ConfigError("eta: values must be nonnegative");
  }
  if (c_d_list.empty() || eta_list.empty()) throw ConfigError("cd/eta: lists must be nonempty");
  if (basis_per_axis < 1) throw ConfigError("basis: per_axis must be at least 1");
  if (!(basis_level >= 0.0 && basis_level < 1.0)) throw ConfigError("basis_level: must lie in [0, 1)");
  for (const auto& f : foci) {
    if (!(f.amplitude > 0.0) || !(f.width > 0.0)) throw ConfigError("focus: amplitude and width must be positive");
  }
  diffusion.validate();
  reaction.validate();
  time.validate();
  (void)grid();
}

ScalarField initial_condition(const TestCaseSpec& spec, const Grid& grid) {
  ScalarField c(grid);
  for (const auto& f : spec.foci) {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    for (int a = 0; a < grid.dim(); ++a) center[a] = grid.origin(a) + f.center[a] * grid.extent(a);
    const double w = f.width * grid.extent(0);
    for (std::size_t v = 0; v < grid.size(); ++v) {
      c[v] += f.amplitude * std::exp(-(grid.position(v) - center).squaredNorm() / (2.0 * w * w));
    }
  }
  c.values() = c.values().cwiseMin(1.0);
  return c;
}

Target make_target(const TestCaseSpec& spec) {
  spec.validate();
  const Grid g = spec.grid();
  Target t;
  t.anatomy = synth_anatomy(g, spec.anatomy_spec());
  for (const auto& f : spec.foci) {
    std::array<int, 3> sub{0, 0, 0};
    for (int a = 0; a < g.dim(); ++a) {
      sub[a] = std::clamp(static_cast<int>(std::lround(f.center[a] * g.n(a))), 0, g.n(a) - 1);
    }
    if (!t.anatomy.tissue.in_brain(g.index(sub[0], sub[1], sub[2]))) {
      throw ConfigError("focus: center lies outside the brain mask");
    }
  }
  DiffusionParams dp = spec.diffusion;
  dp.k_f = spec.kf_true;
  dp.tensor_mode = spec.tensor_mode;
  t.K = assemble_K(t.anatomy.tissue, build_tensor(t.anatomy.dti, dp.tensor_mode), dp);
  ScalarField ic = initial_condition(spec, g);
  if (spec.inverse_crime) {
    t.basis = GaussianBasis::lattice(threshold_mask(ic, 0.1), spec.basis_per_axis);
    // nonnegative coefficients sampled from the foci keep c0 within [0, 1] after rescaling
    t.p_true = Vector(t.basis->size());
    for (int j = 0; j < t.basis->size(); ++j) {
      t.p_true[j] = ic[g.nearest(t.basis->centers[static_cast<std::size_t>(j)])];
    }
    const ScalarField fit = basis_apply(*t.basis, g, t.p_true);
    t.p_true *= ic.values().maxCoeff() / fit.values().maxCoeff();
    ic = basis_apply(*t.basis, g, t.p_true);
  }
  TimeGrid both{2 * spec.time.n_steps, 2.0 * spec.time.horizon};
  t.trajectory = forward_solve(ic, t.K, spec.reaction, both);
  t.c0 = t.trajectory.state(0);
  t.c1 = t.trajectory.state(spec.time.n_steps);
  t.c2 = t.trajectory.state(2 * spec.time.n_steps);
  return t;
}

ScalarField add_noise_unclamped(const ScalarField& d, double eta, std::uint64_t seed) {
  if (!(eta >= 0.0)) throw ConfigError("eta: must be nonnegative");
  ScalarField out = d;
  if (eta == 0.0) return out;
  const double dn = d.values().norm();
  if (dn == 0.0) {
    std::cerr << "warning: add_noise on an all-zero field is a no-op\n";
    return out;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector n = Vector::Zero(d.values().size());
  for (Eigen::Index i = 0; i < n.size(); ++i) {
    if (d.values()[i] > 0.0) n[i] = normal(rng);
  }
  const double nn = n.norm();
  if (nn == 0.0) return out;
  out.values() += (eta * dn / nn) * n;
  return out;
}

ScalarField add_noise(const ScalarField& d, double eta, std::uint64_t seed) {
  ScalarField out = add_noise_unclamped(d, eta, seed);
  out.values() = out.values().cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

ObservationMask threshold_mask(const ScalarField& c, double c_d) { return ObservationMask::from_threshold(c, c_d); }

ScalarField margin(const ScalarField& c, double c_d) {
  ScalarField m(c.grid());
  for (std::size_t v = 0; v < c.size(); ++v) {
    if (c[v] >= kMarginCutoff && c[v] < c_d) m[v] = c[v];
  }
  return m;
}

double rel_error(const ScalarField& c, const ScalarField& target) {
  require_same_grid(c.grid(), target.grid(), "rel_error");
  const double tn = target.values().norm();
  if (tn == 0.0) throw NumericalError("rel_error: target is identically zero");
  return (c.values() - target.values()).norm() / tn;
}

double jaccard(const ScalarField& m, const ScalarField& target) {
  require_same_grid(m.grid(), target.grid(), "jaccard");
  std::size_t inter = 0, uni = 0;
  for (std::size_t v = 0; v < m.size(); ++v) {
    const bool a = m[v] > 0.0, b = target[v] > 0.0;
    inter += a && b;
    uni += a || b;
  }
  if (uni == 0) {
    std::cerr << "warning: jaccard of two empty supports defined as 1\n";
    return 1.0;
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double kf_error(double k_f, double kf_true) {
  if (kf_true == 0.0) throw ConfigError("kf_error: target k_f must be nonzero");
  return std::abs(k_f - kf_true) / std::abs(kf_true);
}

namespace {

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("spearman: need two equal-length samples of size >= 2");
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::uint64_t cell_seed(std::uint64_t seed, double c_d, double eta) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ std::bit_cast<std::uint64_t>(c_d));
  return splitmix64(h ^ std::bit_cast<std::uint64_t>(eta));
}

InverseProblem cell_problem(const TestCaseSpec& spec, const Target& target, double c_d, double eta, double beta,
                            ScalarField* data0, ScalarField* data1) {
  const std::uint64_t seed = cell_seed(spec.seed, c_d, eta);
  const ScalarField n0 = add_noise(target.c0, eta, seed);
  const ScalarField n1 = add_noise(target.c1, eta, splitmix64(seed));
  const ObservationMask m0 = threshold_mask(n0, c_d);
  const ObservationMask m1 = threshold_mask(n1, c_d);
  if (data0) *data0 = observe(m0, n0);
  if (data1) *data1 = observe(m1, n1);
  DiffusionParams dp = spec.diffusion;
  dp.tensor_mode = spec.tensor_mode;
  dp.k_f = spec.invert_kf ? spec.kf_init : spec.kf_true;
  GaussianBasis basis;
  if (target.basis) {
    basis = *target.basis;
  } else {
    const ObservationMask core = threshold_mask(n0, std::max(c_d, spec.basis_level));
    basis = GaussianBasis::lattice(core.count() > 0 ? core : m0, spec.basis_per_axis);
  }
  return make_inverse_problem(target.anatomy, dp, spec.reaction, spec.time, n0, n1, m0, m1, basis, beta,
                              spec.invert_kf);
}

CellResult run_cell(const TestCaseSpec& spec, const Target& target, double c_d, double eta,
                    const CellOptions& options) {
  CellResult res;
  MetricsRow& row = res.row;
  row.c_d = c_d;
  row.eta = eta;
  const InverseProblem prob = cell_problem(spec, target, c_d, eta, options.beta, &res.data0, &res.data1);
  res.state = newton_solve(prob, options.newton);
  row.status = to_string(res.state.status);
  row.k_f = res.state.k_f;
  row.newton_iterations = res.state.newton_iterations(2);
  row.mean_cg = res.state.mean_cg_iterations(2);
  if (spec.invert_kf) row.eps_kf = kf_error(res.state.k_f, spec.kf_true);

  const auto prop = make_propagator(prob, res.state.k_f, Fidelity::Exact);
  const TimeGrid both{2 * spec.time.n_steps, 2.0 * spec.time.horizon};
  const Trajectory recon = propagate(prob.phi.apply(res.state.p), *prop, spec.reaction.rho, both);
  const ScalarField* targets[3] = {&target.c0, &target.c1, &target.c2};
  for (int i = 0; i < 3; ++i) {
    res.recon[i] = recon.state(i * spec.time.n_steps);
    row.eps[i] = rel_error(res.recon[i], *targets[i]);
    // JI threshold uses c_d itself; at c_d = 0 the margins are empty by construction.
    row.ji[i] = jaccard(margin(res.recon[i], c_d), margin(*targets[i], c_d));
  }
  return res;
}

namespace {

std::string cell_tag(double c_d, double eta) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "cd%.2f_eta%.2f", c_d, eta);
  return buf;
}

}  // namespace

std::vector<MetricsRow> run_testcase(const TestCaseSpec& spec, const ReportOptions& options) {
  const Target target = make_target(spec);
  struct Cell {
    double c_d, eta;
  };
  std::vector<Cell> cells;
  for (double c : spec.c_d_list) {
    for (double e : spec.eta_list) cells.push_back({c, e});
  }
  std::vector<MetricsRow> rows(cells.size());
  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell cell = cells[i];
      MetricsRow row;
      try {
        const CellResult res = run_cell(spec, target, cell.c_d, cell.eta, options.cell);
        row = res.row;
        if (options.out_dir && options.slices) {
          const ScalarField* tgt[3] = {&target.c0, &target.c1, &target.c2};
          for (int t = 0; t < 3; ++t) {
            const std::string stem = cell_tag(cell.c_d, cell.eta) + "_t" + std::to_string(t);
            write_pgm_slice(res.recon[t], cell.c_d, *options.out_dir / (stem + "_recon.pgm"));
            write_pgm_slice(*tgt[t], cell.c_d, *options.out_dir / (stem + "_target.pgm"));
          }
        }
      } catch (const std::exception& e) {
        row = MetricsRow{};
        row.c_d = cell.c_d;
        row.eta = cell.eta;
        row.missing = true;
        row.note = e.what();
      }
      {
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cerr << "cell " << cell_tag(cell.c_d, cell.eta) << ": "
                  << (row.missing ? "missing (" + row.note + ")" : row.status) << '\n';
      }
      rows[i] = row;
    }
  };
  const int jobs = std::min<int>(thread_budget(options.jobs), static_cast<int>(cells.size()));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (options.out_dir) {
    std::ofstream os(*options.out_dir / "report.csv");
    if (!os) throw IoError("cannot write " + (*options.out_dir / "report.csv").string());
    write_report_csv(rows, os);
  }
  return rows;
}

void write_report_csv(const std::vector<MetricsRow>& rows, std::ostream& os) {
  os << "c_d,eta,eps_kf,eps_0,JI_0,eps_1,JI_1,eps_2,JI_2\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f,", r.c_d, r.eta);
    os << buf;
    if (r.missing) {
      os << "missing,missing,missing,missing,missing,missing,missing\n";
      continue;
    }
    if (r.eps_kf) {
      std::snprintf(buf, sizeof buf, "%.3e,", *r.eps_kf);
      os << buf;
    } else {
      os << "-,";
    }
    std::snprintf(buf, sizeof buf, "%.3e,%.3f,%.3e,%.3f,%.3e,%.3f\n", r.eps[0], r.ji[0], r.eps[1], r.ji[1], r.eps[2],
                  r.ji[2]);
    os << buf;
  }
}

void write_pgm_slice(const ScalarField& c, double contour, const std::filesystem::path& path) {
  const Grid& g = c.grid();
  const int nx = g.n(0), ny = g.n(1);
  const int k = g.dim() == 3 ? g.n(2) / 2 : 0;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "P5\n" << nx << ' ' << ny << "\n255\n";
  const auto above = [&](int i, int j) { return c[g.index((i + nx) % nx, (j + ny) % ny, k)] >= contour; };
  std::vector<unsigned char> img(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double v = std::clamp(c[g.index(i, j, k)], 0.0, 1.0);
      auto px = static_cast<unsigned char>(std::lround(255.0 * v));
      const bool in = above(i, j);
      if (contour > 0.0 && in &&
          (!above(i - 1, j) || !above(i + 1, j) || !above(i, j - 1) || !above(i, j + 1))) {
        px = 255;
      }
      // rows top to bottom with y increasing upward
      img[static_cast<std::size_t>(ny - 1 - j) * nx + i] = px;
    }
  }
  os.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

int thread_budget(int requested) {
  int n = std::max(requested, 1);
  if (const char* env = std::getenv("GLIO_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

}  // namespace glioma
