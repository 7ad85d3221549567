#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "glioma/inversion.hpp"

namespace glioma {

/// Gaussian seed of the target tumor; center and width are fractions of the domain extent.
struct Focus {
  Eigen::Vector3d center{0.5, 0.5, 0.5};
  double amplitude = 1.0;
  double width = 0.05;
};

struct TestCaseSpec {
  int case_id = 2;
  TensorMode tensor_mode = TensorMode::FullFa;
  std::vector<Focus> foci;
  double kf_true = 0.15;
  double kf_init = 0.05;
  bool invert_kf = true;
  std::vector<double> c_d_list{0.1, 0.2, 0.3, 0.4};
  std::vector<double> eta_list{0.01, 0.05, 0.10};
  std::vector<int> dims{64, 64};
  double extent = 2.0 * M_PI;
  std::uint64_t seed = 1;
  int basis_per_axis = 5;
  /// The lattice spans {d0 >= max(c_d, basis_level)}, so cells with different c_d share one basis.
  double basis_level = 0.4;
  FiberPattern fiber = FiberPattern::Circular;
  double fiber_strength = 0.8;
  double anatomy_jitter = 0.0;
  /// Target c0 = Phi p* on a lattice fitted to the foci, and every cell inverts with that same basis.
  bool inverse_crime = false;
  DiffusionParams diffusion;  // k_f here is ignored; kf_true drives the target
  ReactionParams reaction;
  TimeGrid time;              // [0, 1]; predictions continue with the same dt to t = 2

  /// Cases 1-4; dims may be 2D or 3D.
  static TestCaseSpec preset(int case_id, std::vector<int> dims = {64, 64});

  Grid grid() const;
  AnatomySpec anatomy_spec() const;
  void validate() const;
};

/// Target trajectory over [0, 2]; states[0], [n_steps], [2 n_steps] are c*_0, c*_1, c*_2.
struct Target {
  Anatomy anatomy;
  TensorField K;
  Trajectory trajectory;
  ScalarField c0, c1, c2;
  std::optional<GaussianBasis> basis;  // set for inverse-crime targets
  Vector p_true;
};

/// Sum of the foci clamped to [0, 1], integrated with the true tensor mode and k_f*.
ScalarField initial_condition(const TestCaseSpec& spec, const Grid& grid);
Target make_target(const TestCaseSpec& spec);

/// Zero-mean Gaussian noise on the support of d, scaled to |n| = eta |d| before clamping to [0, 1].
ScalarField add_noise(const ScalarField& d, double eta, std::uint64_t seed);
/// Clamp-free variant for inspecting the exact normalization.
ScalarField add_noise_unclamped(const ScalarField& d, double eta, std::uint64_t seed);

ObservationMask threshold_mask(const ScalarField& c, double c_d);
/// c where 0.01 <= c < c_d, else 0.
ScalarField margin(const ScalarField& c, double c_d);

double rel_error(const ScalarField& c, const ScalarField& target);
/// Voxel-count Jaccard index of the supports; two empty supports give 1.
double jaccard(const ScalarField& m, const ScalarField& target);
double kf_error(double k_f, double kf_true);
/// Spearman rank correlation with averaged ranks for ties; 0 when either input is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

std::uint64_t cell_seed(std::uint64_t seed, double c_d, double eta);

struct MetricsRow {
  double c_d = 0.0;
  double eta = 0.0;
  std::optional<double> eps_kf;  // absent when k_f is known
  double eps[3] = {0.0, 0.0, 0.0};
  double ji[3] = {0.0, 0.0, 0.0};
  bool missing = false;
  std::string note;
  // diagnostics, not part of the table
  double k_f = 0.0;
  int newton_iterations = 0;
  double mean_cg = 0.0;
  std::string status;
};

struct CellResult {
  MetricsRow row;
  InversionState state;
  ScalarField recon[3];
  ScalarField data0, data1;
};

struct CellOptions {
  double beta = 0.01;
  NewtonOptions newton;
};

/// Builds the thresholded noisy data for one cell and returns the resulting inverse problem.
InverseProblem cell_problem(const TestCaseSpec& spec, const Target& target, double c_d, double eta, double beta,
                            ScalarField* data0 = nullptr, ScalarField* data1 = nullptr);

CellResult run_cell(const TestCaseSpec& spec, const Target& target, double c_d, double eta,
                    const CellOptions& options);

struct ReportOptions {
  CellOptions cell;
  int jobs = 1;
  std::optional<std::filesystem::path> out_dir;  // CSV + PGM slices when set
  bool slices = true;
};

/// Every (c_d, eta) cell; failed cells are flagged missing and the run continues.
std::vector<MetricsRow> run_testcase(const TestCaseSpec& spec, const ReportOptions& options);

/// c_d,eta,eps_kf,eps_0,JI_0,eps_1,JI_1,eps_2,JI_2
void write_report_csv(const std::vector<MetricsRow>& rows, std::ostream& os);

/// 8-bit PGM of the middle z-slice, [0, 1] mapped linearly, voxels on the c_d contour set to 255.
void write_pgm_slice(const ScalarField& c, double contour, const std::filesystem::path& path);

/// Thread budget: min(requested, GLIO_THREADS) and at least 1.
int thread_budget(int requested);

}  // namespace glioma
