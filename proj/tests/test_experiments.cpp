#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "glioma/errors.hpp"
#include "glioma/experiments.hpp"

using namespace glioma;
using namespace glioma::testing;

namespace {

TestCaseSpec tiny_case(int case_id) {
  TestCaseSpec spec = TestCaseSpec::preset(case_id, {32, 32});
  spec.basis_per_axis = 3;
  // a soft unsaturated focus keeps the coarse 3x3 fit well behaved on 32^2
  spec.foci = {Focus{{0.40, 0.56, 0.5}, 1.0, 0.08}};
  return spec;
}

/// Connected components (4-neighbour) of {c >= level}.
int components(const ScalarField& c, double level) {
  const Grid& g = c.grid();
  std::vector<int> label(g.size(), 0);
  int count = 0;
  for (std::size_t v = 0; v < g.size(); ++v) {
    if (c[v] < level || label[v]) continue;
    ++count;
    std::vector<std::size_t> stack{v};
    label[v] = count;
    while (!stack.empty()) {
      const auto s = g.subscripts(stack.back());
      stack.pop_back();
      const int nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      for (const auto& d : nb) {
        const int i = s[0] + d[0], j = s[1] + d[1];
        if (i < 0 || j < 0 || i >= g.n(0) || j >= g.n(1)) continue;
        const std::size_t w = g.index(i, j);
        if (c[w] >= level && !label[w]) {
          label[w] = count;
          stack.push_back(w);
        }
      }
    }
  }
  return count;
}

}  // namespace

TEST_CASE("noise is normalized relative to the data before clamping") {
  const Grid g = Grid::cube(2, 32, 2.0 * M_PI);
  const ScalarField d = bump(g, Eigen::Vector3d(3.0, 3.0, 0.0), 0.8, 0.9);
  for (double eta : {0.01, 0.05, 0.1}) {
    const ScalarField noisy = add_noise_unclamped(d, eta, 7);
    CHECK((noisy.values() - d.values()).norm() == doctest::Approx(eta * d.values().norm()).epsilon(1e-12));
    for (std::size_t v = 0; v < g.size(); ++v) {
      if (d[v] == 0.0) CHECK(noisy[v] == 0.0);
    }
    const ScalarField clamped = add_noise(d, eta, 7);
    CHECK(clamped.values().minCoeff() >= 0.0);
    CHECK(clamped.values().maxCoeff() <= 1.0);
  }
  CHECK(add_noise(d, 0.0, 7).values() == d.values());
  const ScalarField a = add_noise_unclamped(d, 0.05, 1), b = add_noise_unclamped(d, 0.05, 2);
  CHECK(a.values() != b.values());
  CHECK((a.values() - d.values()).norm() == doctest::Approx((b.values() - d.values()).norm()).epsilon(1e-12));
  CHECK_THROWS_AS(add_noise(d, -0.1, 1), ConfigError);
}

TEST_CASE("thresholds, margin and metrics") {
  const Grid g = Grid::cube(2, 8, 1.0);
  ScalarField c(g);
  c[0] = 0.005;
  c[1] = 0.05;
  c[2] = 0.2;
  c[3] = 0.7;
  const ObservationMask m = threshold_mask(c, 0.2);
  CHECK_FALSE(m[1]);
  CHECK(m[2]);
  CHECK(m[3]);
  const ScalarField mg = margin(c, 0.2);
  CHECK(mg[0] == 0.0);
  CHECK(mg[1] == 0.05);
  CHECK(mg[2] == 0.0);
  CHECK(mg[3] == 0.0);

  ScalarField x(g), y(g);
  x[0] = 1.0;
  y[1] = 1.0;
  CHECK(rel_error(x, y) == doctest::Approx(std::sqrt(2.0)));
  CHECK(rel_error(y, y) == 0.0);
  CHECK_THROWS_AS(rel_error(x, ScalarField(g)), NumericalError);

  x[1] = 1.0;
  CHECK(jaccard(x, y) == doctest::Approx(0.5));
  CHECK(jaccard(y, x) == doctest::Approx(0.5));
  CHECK(jaccard(ScalarField(g), ScalarField(g)) == 1.0);

  CHECK(kf_error(0.165, 0.15) == doctest::Approx(0.1));
  CHECK(kf_error(0.135, 0.15) == doctest::Approx(0.1));
  CHECK_THROWS_AS(kf_error(0.1, 0.0), ConfigError);
}

TEST_CASE("spearman") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3, 4}, {1, 8, 27, 64}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3}, {5, 5, 5}) == 0.0);
  // ties take averaged ranks: y ranks (1.5, 1.5, 3)
  CHECK(spearman({1, 2, 3}, {0, 0, 1}) == doctest::Approx(std::sqrt(3.0) / 2.0));
  CHECK_THROWS_AS(spearman({1}, {1}), ConfigError);
}

TEST_CASE("cell seeds are distinct and reproducible") {
  CHECK(cell_seed(1, 0.2, 0.05) == cell_seed(1, 0.2, 0.05));
  CHECK(cell_seed(1, 0.2, 0.05) != cell_seed(1, 0.3, 0.05));
  CHECK(cell_seed(1, 0.2, 0.05) != cell_seed(1, 0.2, 0.10));
  CHECK(cell_seed(1, 0.2, 0.05) != cell_seed(2, 0.2, 0.05));
}

TEST_CASE("presets") {
  for (int id = 1; id <= 4; ++id) CHECK_NOTHROW(TestCaseSpec::preset(id).validate());
  CHECK_FALSE(TestCaseSpec::preset(1).invert_kf);
  CHECK(TestCaseSpec::preset(3).foci.size() == 2);
  CHECK(TestCaseSpec::preset(4).tensor_mode == TensorMode::Principal);
  CHECK_THROWS_AS(TestCaseSpec::preset(5), ConfigError);
  TestCaseSpec bad = TestCaseSpec::preset(2);
  bad.c_d_list = {1.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TestCaseSpec::preset(2);
  bad.foci[0].center = {0.02, 0.02, 0.5};
  CHECK_THROWS_AS(make_target(bad), ConfigError);
}

TEST_CASE("target continues the same trajectory past t = 1") {
  const TestCaseSpec spec = tiny_case(2);
  const Target t = make_target(spec);
  const CrankNicolsonDiffusion prop(t.K, spec.time.dt());
  const Trajectory tail = propagate(t.c1.values(), prop, spec.reaction.rho, spec.time);
  CHECK((tail.final_state().values() - t.c2.values()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(t.c1.values().sum() > t.c0.values().sum());
}

TEST_CASE("multifocal target has two separated tumors") {
  const TestCaseSpec spec = TestCaseSpec::preset(3, {64, 64});
  const ScalarField c0 = initial_condition(spec, spec.grid());
  CHECK(components(c0, 0.5) == 2);
  CHECK(components(c0, 0.1) == 2);
}

TEST_CASE("cell problem observes thresholded noisy data") {
  const TestCaseSpec spec = tiny_case(2);
  const Target t = make_target(spec);
  ScalarField d0, d1;
  const InverseProblem prob = cell_problem(spec, t, 0.2, 0.05, 0.01, &d0, &d1);
  CHECK(prob.invert_kf);
  CHECK(prob.k_f == spec.kf_init);
  CHECK(prob.parameters() == 9);
  for (std::size_t v = 0; v < d1.size(); ++v) {
    CHECK(prob.mask1[v] == (d1[v] >= 0.2));
    CHECK(prob.d1[v] == (prob.mask1[v] ? d1[v] : 0.0));
  }
}

TEST_CASE("cells with different thresholds share the basis") {
  const TestCaseSpec spec = tiny_case(2);
  const Target t = make_target(spec);
  const InverseProblem a = cell_problem(spec, t, 0.1, 0.0, 0.01), b = cell_problem(spec, t, 0.3, 0.0, 0.01);
  CHECK(a.phi.matrix() == b.phi.matrix());
  CHECK(a.mask0.count() > b.mask0.count());
}

TEST_CASE("report: header, missing cells, determinism across job counts") {
  TestCaseSpec spec = tiny_case(2);
  spec.c_d_list = {0.2, 0.3};
  spec.eta_list = {0.05};
  ReportOptions opts;
  opts.cell.newton.max_newton = 2;
  const auto dir = std::filesystem::temp_directory_path() / "glioma_report_test";
  std::filesystem::remove_all(dir);
  opts.out_dir = dir;
  const auto rows1 = run_testcase(spec, opts);
  opts.jobs = 2;
  opts.out_dir.reset();
  const auto rows2 = run_testcase(spec, opts);
  std::ostringstream a, b;
  write_report_csv(rows1, a);
  write_report_csv(rows2, b);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("c_d,eta,eps_kf,eps_0,JI_0,eps_1,JI_1,eps_2,JI_2\n0.20,0.05,", 0) == 0);
  std::ifstream f(dir / "report.csv");
  std::stringstream on_disk;
  on_disk << f.rdbuf();
  CHECK(on_disk.str() == a.str());
  CHECK(std::filesystem::exists(dir / "cd0.20_eta0.05_t1_recon.pgm"));
  std::filesystem::remove_all(dir);

  MetricsRow missing;
  missing.c_d = 0.4;
  missing.eta = 0.1;
  missing.missing = true;
  std::ostringstream m;
  write_report_csv({missing}, m);
  CHECK(m.str().find("0.40,0.10,missing") != std::string::npos);

  spec = tiny_case(1);
  spec.c_d_list = {0.2};
  spec.eta_list = {0.0};
  const auto known = run_testcase(spec, ReportOptions{});
  std::ostringstream k;
  write_report_csv(known, k);
  CHECK(k.str().find("0.20,0.00,-,") != std::string::npos);
}
