#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "glioma/errors.hpp"
#include "glioma/volume_io.hpp"

namespace glioma::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || trim(text.substr(used)) != "") throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

long parse_int(const std::string& key, const std::string& text) {
  const double v = parse_double(key, text);
  if (v != static_cast<double>(static_cast<long>(v))) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return static_cast<long>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::vector<int> parse_dims(const std::string& key, const std::string& text) {
  std::vector<int> dims;
  for (double d : parse_list(key, text)) {
    if (d != static_cast<int>(d)) throw ConfigError(key + ": grid sizes must be integers");
    dims.push_back(static_cast<int>(d));
  }
  return dims;
}

FiberPattern parse_fiber(const std::string& key, const std::string& text) {
  if (text == "uniform") return FiberPattern::Uniform;
  if (text == "circular") return FiberPattern::Circular;
  throw ConfigError(key + ": expected uniform or circular, got '" + text + "'");
}

/// "x,y[,z],amplitude,width" with x, y, z and width as fractions of the domain.
Focus parse_focus(const std::string& key, const std::string& text) {
  const std::vector<double> v = parse_list(key, text);
  if (v.size() != 4 && v.size() != 5) throw ConfigError(key + ": expected x,y[,z],amplitude,width");
  Focus f;
  f.center = {v[0], v[1], v.size() == 5 ? v[2] : 0.5};
  f.amplitude = v[v.size() - 2];
  f.width = v.back();
  return f;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"grid.dims", [](RunConfig& c, auto& k, auto& v) { c.spec.dims = parse_dims(k, v); }},
      {"grid.extent", [](RunConfig& c, auto& k, auto& v) { c.spec.extent = parse_double(k, v); }},
      {"model.rho", [](RunConfig& c, auto& k, auto& v) { c.spec.reaction.rho = parse_double(k, v); }},
      {"model.k_g", [](RunConfig& c, auto& k, auto& v) { c.spec.diffusion.k_g = parse_double(k, v); }},
      {"model.k_w", [](RunConfig& c, auto& k, auto& v) { c.spec.diffusion.k_w = parse_double(k, v); }},
      {"model.k_f", [](RunConfig& c, auto& k, auto& v) { c.spec.kf_true = parse_double(k, v); }},
      {"model.penalty_eps", [](RunConfig& c, auto& k, auto& v) { c.spec.diffusion.penalty_eps = parse_double(k, v); }},
      {"model.tensor_mode", [](RunConfig& c, auto&, auto& v) { c.spec.tensor_mode = parse_tensor_mode(v); }},
      {"model.nt", [](RunConfig& c, auto& k, auto& v) { c.spec.time.n_steps = static_cast<int>(parse_int(k, v)); }},
      {"model.horizon", [](RunConfig& c, auto& k, auto& v) { c.spec.time.horizon = parse_double(k, v); }},
      {"anatomy.fiber", [](RunConfig& c, auto& k, auto& v) { c.spec.fiber = parse_fiber(k, v); }},
      {"anatomy.fiber_strength", [](RunConfig& c, auto& k, auto& v) { c.spec.fiber_strength = parse_double(k, v); }},
      {"anatomy.jitter", [](RunConfig& c, auto& k, auto& v) { c.spec.anatomy_jitter = parse_double(k, v); }},
      {"case.seed",
       [](RunConfig& c, auto& k, auto& v) {
         const long s = parse_int(k, v);
         if (s < 0) throw ConfigError(k + ": must be nonnegative");
         c.spec.seed = static_cast<std::uint64_t>(s);
       }},
      {"case.kf_init", [](RunConfig& c, auto& k, auto& v) { c.spec.kf_init = parse_double(k, v); }},
      {"case.inverse_crime", [](RunConfig& c, auto& k, auto& v) { c.spec.inverse_crime = parse_bool(k, v); }},
      {"case.invert_kf", [](RunConfig& c, auto& k, auto& v) { c.spec.invert_kf = parse_bool(k, v); }},
      {"inversion.beta", [](RunConfig& c, auto& k, auto& v) { c.beta = parse_double(k, v); }},
      {"inversion.hessian", [](RunConfig& c, auto&, auto& v) { c.newton.hessian = parse_hessian_mode(v); }},
      {"inversion.basis_per_axis",
       [](RunConfig& c, auto& k, auto& v) { c.spec.basis_per_axis = static_cast<int>(parse_int(k, v)); }},
      {"inversion.basis_level", [](RunConfig& c, auto& k, auto& v) { c.spec.basis_level = parse_double(k, v); }},
      {"inversion.max_newton",
       [](RunConfig& c, auto& k, auto& v) { c.newton.max_newton = static_cast<int>(parse_int(k, v)); }},
      {"inversion.warm_start", [](RunConfig& c, auto& k, auto& v) { c.newton.warm_start = parse_bool(k, v); }},
      {"inversion.precondition", [](RunConfig& c, auto& k, auto& v) { c.newton.precondition = parse_bool(k, v); }},
      {"experiment.cd", [](RunConfig& c, auto& k, auto& v) { c.spec.c_d_list = parse_list(k, v); }},
      {"experiment.eta", [](RunConfig& c, auto& k, auto& v) { c.spec.eta_list = parse_list(k, v); }},
      {"experiment.jobs", [](RunConfig& c, auto& k, auto& v) { c.jobs = static_cast<int>(parse_int(k, v)); }},
      {"lcurve.betas", [](RunConfig& c, auto& k, auto& v) { c.betas = parse_list(k, v); }},
      {"output.dir", [](RunConfig& c, auto&, auto& v) { c.out = v; }},
  };
  return table;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw IoError("cannot write " + path.string());
}

void prepare_out(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out.string() + ": " + ec.message());
}

TensorField true_K(const RunConfig& cfg, const Anatomy& anatomy) {
  DiffusionParams dp = cfg.spec.diffusion;
  dp.k_f = cfg.spec.kf_true;
  dp.tensor_mode = cfg.spec.tensor_mode;
  return assemble_K(anatomy.tissue, build_tensor(anatomy.dti, dp.tensor_mode), dp);
}

}  // namespace

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

ConfigEntries parse_config_text(const std::string& text) {
  ConfigEntries entries;
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key != "case.focus" && key != "case.id" && !setters().count(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
    if (key != "case.focus" && entries.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    entries.emplace(key, value);
  }
  return entries;
}

ConfigEntries read_config_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

void apply_config(RunConfig& cfg, const ConfigEntries& entries) {
  if (auto it = entries.find("case.id"); it != entries.end()) {
    const std::vector<int> dims = cfg.spec.dims;
    cfg.spec = TestCaseSpec::preset(static_cast<int>(parse_int("case.id", it->second)), dims);
  }
  std::vector<Focus> foci;
  for (const auto& [key, value] : entries) {
    if (key == "case.id") continue;
    if (key == "case.focus") {
      foci.push_back(parse_focus(key, value));
      continue;
    }
    const auto s = setters().find(key);
    if (s == setters().end()) throw ConfigError("unknown key '" + key + "'");
    s->second(cfg, key, value);
  }
  if (!foci.empty()) cfg.spec.foci = foci;
}

void RunConfig::validate() const {
  spec.validate();
  if (!(beta >= 0.0)) throw ConfigError("beta: must be nonnegative");
  if (betas.size() < 4) throw ConfigError("lcurve.betas: at least 4 values required");
  for (double b : betas) {
    if (!(b > 0.0)) throw ConfigError("lcurve.betas: values must be positive");
  }
  if (newton.max_newton < 1) throw ConfigError("max_newton: must be at least 1");
  if (jobs < 1) throw ConfigError("jobs: must be at least 1");
}

std::string dump_config(const RunConfig& cfg) {
  const TestCaseSpec& s = cfg.spec;
  std::ostringstream os;
  std::vector<double> dims(s.dims.begin(), s.dims.end());
  os << "[grid]\ndims = " << join(dims) << "\nextent = " << fmt(s.extent) << "\n\n";
  os << "[model]\nrho = " << fmt(s.reaction.rho) << "\nk_g = " << fmt(s.diffusion.k_g)
     << "\nk_w = " << fmt(s.diffusion.k_w) << "\nk_f = " << fmt(s.kf_true)
     << "\npenalty_eps = " << fmt(s.diffusion.penalty_eps) << "\ntensor_mode = " << to_string(s.tensor_mode)
     << "\nnt = " << s.time.n_steps << "\nhorizon = " << fmt(s.time.horizon) << "\n\n";
  os << "[anatomy]\nfiber = " << (s.fiber == FiberPattern::Circular ? "circular" : "uniform")
     << "\nfiber_strength = " << fmt(s.fiber_strength) << "\njitter = " << fmt(s.anatomy_jitter) << "\n\n";
  os << "[case]\nid = " << s.case_id << "\nseed = " << s.seed << "\nkf_init = " << fmt(s.kf_init)
     << "\ninvert_kf = " << (s.invert_kf ? "true" : "false")
     << "\ninverse_crime = " << (s.inverse_crime ? "true" : "false") << "\n";
  for (const Focus& f : s.foci) {
    std::vector<double> v{f.center[0], f.center[1]};
    if (s.dims.size() == 3) v.push_back(f.center[2]);
    v.push_back(f.amplitude);
    v.push_back(f.width);
    os << "focus = " << join(v) << "\n";
  }
  os << "\n[inversion]\nbeta = " << fmt(cfg.beta) << "\nhessian = " << to_string(cfg.newton.hessian)
     << "\nbasis_per_axis = " << s.basis_per_axis << "\nbasis_level = " << fmt(s.basis_level)
     << "\nmax_newton = " << cfg.newton.max_newton
     << "\nwarm_start = " << (cfg.newton.warm_start ? "true" : "false")
     << "\nprecondition = " << (cfg.newton.precondition ? "true" : "false") << "\n\n";
  os << "[experiment]\ncd = " << join(s.c_d_list) << "\neta = " << join(s.eta_list) << "\njobs = " << cfg.jobs
     << "\n\n";
  os << "[lcurve]\nbetas = " << join(cfg.betas) << "\n\n";
  os << "[output]\ndir = " << cfg.out.string() << "\n";
  return os.str();
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  prepare_out(cfg);
  const Target t = make_target(cfg.spec);
  const std::pair<std::string, const ScalarField*> fields[] = {{"c0.glf", &t.c0}, {"c1.glf", &t.c1}, {"c2.glf", &t.c2}};
  save_scalar(cfg.out / "tissue.glf", t.anatomy.tissue.to_field());
  save_tensor(cfg.out / "dti.glf", t.anatomy.dti);
  std::string manifest = "tissue.glf\ndti.glf\n";
  for (const auto& [name, field] : fields) {
    save_scalar(cfg.out / name, *field);
    manifest += name + "\n";
  }
  write_text(cfg.out / "manifest.txt", manifest);
  write_text(cfg.out / "config.ini", dump_config(cfg));
  out << "wrote " << t.c0.grid().describe() << " anatomy and targets to " << cfg.out.string() << "\n";
  return 0;
}

int cmd_forward(const RunConfig& cfg, std::ostream& out) {
  prepare_out(cfg);
  const Grid g = cfg.spec.grid();
  const Anatomy anatomy = synth_anatomy(g, cfg.spec.anatomy_spec());
  const Trajectory traj = forward_solve(initial_condition(cfg.spec, g), true_K(cfg, anatomy), cfg.spec.reaction,
                                        cfg.spec.time);
  export_trajectory(traj, cfg.out, "c");
  const double level = cfg.spec.c_d_list.front();
  std::ostringstream log;
  char head[64];
  std::snprintf(head, sizeof head, "step,t,mass,max,volume_cd%.2f\n", level);
  log << head;
  for (std::size_t n = 0; n < traj.states.size(); ++n) {
    const Vector& c = traj.states[n];
    const double vol = static_cast<double>((c.array() >= level).count()) * g.cell_volume();
    char line[160];
    std::snprintf(line, sizeof line, "%zu,%.6f,%.9e,%.9e,%.9e\n", n, static_cast<double>(n) * cfg.spec.time.dt(),
                  c.sum() * g.cell_volume(), c.maxCoeff(), vol);
    log << line;
  }
  write_text(cfg.out / "forward_log.csv", log.str());
  out << log.str();
  return 0;
}

int cmd_invert(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  prepare_out(cfg);
  if (cfg.spec.c_d_list.size() > 1 || cfg.spec.eta_list.size() > 1) {
    err << "note: invert uses the first c_d and eta only\n";
  }
  const double c_d = cfg.spec.c_d_list.front(), eta = cfg.spec.eta_list.front();
  const Target t = make_target(cfg.spec);
  const CellResult res = run_cell(cfg.spec, t, c_d, eta, CellOptions{cfg.beta, cfg.newton});
  {
    std::ofstream csv(cfg.out / "convergence.csv");
    write_convergence_csv(res.state, csv);
    if (!csv) throw IoError("cannot write " + (cfg.out / "convergence.csv").string());
  }
  for (int i = 0; i < 3; ++i) save_scalar(cfg.out / ("c" + std::to_string(i) + "_recon.glf"), res.recon[i]);
  write_report_csv({res.row}, out);
  char kf[64];
  std::snprintf(kf, sizeof kf, "k_f = %.6g\n", res.state.k_f);
  out << kf;
  if (res.state.status == NewtonStatus::LineSearchFailed) {
    err << "error: inversion stopped: " << to_string(res.state.status) << "\n";
    return 3;
  }
  if (res.state.status != NewtonStatus::Converged) err << "warning: " << to_string(res.state.status) << "\n";
  return 0;
}

int cmd_lcurve(const RunConfig& cfg, std::ostream& out) {
  prepare_out(cfg);
  const Target t = make_target(cfg.spec);
  const InverseProblem prob = cell_problem(cfg.spec, t, cfg.spec.c_d_list.front(), cfg.spec.eta_list.front(), cfg.beta);
  const LCurve curve = lcurve(prob, cfg.betas, cfg.newton);
  std::ofstream csv(cfg.out / "lcurve.csv");
  write_lcurve_csv(curve, csv);
  if (!csv) throw IoError("cannot write " + (cfg.out / "lcurve.csv").string());
  if (!curve.corner) throw NumericalError("lcurve: no corner among the valid points");
  out << "beta = " << fmt(curve.chosen_beta()) << "\n";
  return 0;
}

int cmd_report(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  prepare_out(cfg);
  err << "note: synthetic anatomy; values are not comparable to published tables, only their trends\n";
  ReportOptions opts;
  opts.cell = CellOptions{cfg.beta, cfg.newton};
  opts.jobs = cfg.jobs;
  opts.out_dir = cfg.out;
  write_report_csv(run_testcase(cfg.spec, opts), out);
  return 0;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Glioma growth simulation and inversion"};
  app.fallthrough();
  app.require_subcommand(1);
  std::string config_path, grid, cd, eta, mode, hessian, out_dir;
  int nt = 0, case_id = 0, jobs = 0;
  long seed = 0;
  double rho = 0, kf = 0, beta = 0;
  bool dry_run = false;
  auto* o_config = app.add_option("--config", config_path, "config file");
  auto* o_grid = app.add_option("--grid", grid, "NX[,NY[,NZ]]");
  auto* o_nt = app.add_option("--nt", nt, "time steps on [0, 1]");
  auto* o_rho = app.add_option("--rho", rho, "proliferation rate");
  auto* o_kf = app.add_option("--kf", kf, "anisotropic diffusion rate of the target");
  auto* o_cd = app.add_option("--cd", cd, "detection thresholds, comma separated");
  auto* o_eta = app.add_option("--eta", eta, "noise levels, comma separated");
  auto* o_beta = app.add_option("--beta", beta, "regularization weight");
  auto* o_seed = app.add_option("--seed", seed, "random seed");
  auto* o_case = app.add_option("--case", case_id, "test case preset 1-4");
  auto* o_mode = app.add_option("--mode", mode, "full_fa or principal");
  auto* o_hess = app.add_option("--hessian", hessian, "gn or full");
  auto* o_out = app.add_option("--out", out_dir, "output directory");
  auto* o_jobs = app.add_option("--jobs", jobs, "parallel cells for report");
  app.add_flag("--dry-run", dry_run, "print the resolved configuration and exit");
  for (const char* name : {"synth", "forward", "invert", "lcurve", "report"}) app.add_subcommand(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    cfg.command = app.get_subcommands().front()->get_name();
    ConfigEntries entries;
    if (o_config->count()) entries = read_config_file(config_path);
    if (o_case->count()) {
      entries.erase("case.id");
      entries.emplace("case.id", std::to_string(case_id));
    }
    apply_config(cfg, entries);
    if (o_grid->count()) cfg.spec.dims = parse_dims("--grid", grid);
    if (o_nt->count()) cfg.spec.time.n_steps = nt;
    if (o_rho->count()) cfg.spec.reaction.rho = rho;
    if (o_kf->count()) cfg.spec.kf_true = kf;
    if (o_cd->count()) cfg.spec.c_d_list = parse_list("--cd", cd);
    if (o_eta->count()) cfg.spec.eta_list = parse_list("--eta", eta);
    if (o_beta->count()) cfg.beta = beta;
    if (o_seed->count()) {
      if (seed < 0) throw ConfigError("--seed: must be nonnegative");
      cfg.spec.seed = static_cast<std::uint64_t>(seed);
    }
    if (o_mode->count()) cfg.spec.tensor_mode = parse_tensor_mode(mode);
    if (o_hess->count()) cfg.newton.hessian = parse_hessian_mode(hessian);
    if (o_out->count()) cfg.out = out_dir;
    if (o_jobs->count()) cfg.jobs = jobs;
    cfg.dry_run = dry_run;
    cfg.validate();

    if (cfg.dry_run) {
      out << dump_config(cfg);
      return 0;
    }
    if (cfg.command == "synth") return cmd_synth(cfg, out);
    if (cfg.command == "forward") return cmd_forward(cfg, out);
    if (cfg.command == "invert") return cmd_invert(cfg, out, err);
    if (cfg.command == "lcurve") return cmd_lcurve(cfg, out);
    return cmd_report(cfg, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace glioma::cli
