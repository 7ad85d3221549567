#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "glioma/experiments.hpp"

namespace glioma::cli {

/// Everything a command needs, resolved from preset, config file and flags (in that order).
struct RunConfig {
  std::string command;
  TestCaseSpec spec = TestCaseSpec::preset(2);
  double beta = 0.01;
  std::vector<double> betas{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  NewtonOptions newton;
  std::filesystem::path out = "out";
  int jobs = 1;
  bool dry_run = false;

  void validate() const;
};

/// "section.key" -> values in file order; a key may repeat only where a list is meaningful (focus).
using ConfigEntries = std::multimap<std::string, std::string>;

/// Flat "key = value" text with [section] headers; '#' starts a comment.
ConfigEntries parse_config_text(const std::string& text);
ConfigEntries read_config_file(const std::filesystem::path& path);

/// Applies entries on top of `cfg`; unknown keys and malformed values throw ConfigError.
void apply_config(RunConfig& cfg, const ConfigEntries& entries);

/// Resolved parameters in config-file syntax; parsing the output reproduces the config.
std::string dump_config(const RunConfig& cfg);

std::vector<double> parse_list(const std::string& key, const std::string& text);

/// Full command line in, process exit code out: 0 ok, 2 config, 3 numerical, 4 I/O.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int cmd_synth(const RunConfig& cfg, std::ostream& out);
int cmd_forward(const RunConfig& cfg, std::ostream& out);
int cmd_invert(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_lcurve(const RunConfig& cfg, std::ostream& out);
int cmd_report(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace glioma::cli
