// Batch front end: run a verification suite and write its JSON report plus
// CSV side tables, or emit the scan tables behind a named figure. Exit code
// 0 means every executed check passed, 1 means at least one check failed,
// 2 a configuration problem, 3 any other runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <map>
#include <string>

#include <ppalab/checks.hpp>

namespace {

// Output directory precedence: command-line flag, then the environment
// override, then the configured default.
std::string resolve_out_dir(const std::string& flag_value, const ppalab::RunConfig& cfg) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("PPALAB_OUT"); env != nullptr && env[0] != '\0')
    return std::string(env);
  return cfg.out_dir;
}

void write_tables(const std::filesystem::path& dir,
                  const std::map<std::string, ppalab::CsvTable>& tables) {
  for (const auto& [name, table] : tables)
    ppalab::write_text_file((dir / name).string(), ppalab::csv_string(table));
}

int run_command(const ppalab::RunConfig& cfg, const std::string& suite,
                const std::string& out_dir) {
  if (suite != "all" && !ppalab::known_suite(suite))
    throw ppalab::ConfigError("unknown suite: " + suite);
  std::filesystem::create_directories(out_dir);

  ppalab::SuiteArtifacts art;
  const ppalab::Report rep = suite == "all" ? ppalab::run_all_checks(cfg, &art)
                                            : ppalab::run_suite_checks(cfg, suite, &art);
  const std::filesystem::path dir(out_dir);
  ppalab::write_text_file((dir / (suite + "_report.json")).string(), ppalab::report_string(rep));
  write_tables(dir, art.tables);

  int failed = 0;
  for (const ppalab::CheckRow& row : rep.rows) {
    if (!row.pass) ++failed;
    std::printf("%-34s %s  residual %.3e  tolerance %.3e\n", row.check_id.c_str(),
                row.pass ? "PASS" : "FAIL", row.residual, row.tolerance);
  }
  if (failed == 0)
    std::printf("all %zu checks passed\n", rep.rows.size());
  else
    std::printf("%d of %zu checks failed\n", failed, rep.rows.size());
  return failed == 0 ? 0 : 1;
}

int plot_command(const ppalab::RunConfig& cfg, const std::string& target,
                 const std::string& out_dir) {
  const std::map<std::string, ppalab::CsvTable> tables = ppalab::plot_tables(cfg, target);
  std::filesystem::create_directories(out_dir);
  write_tables(out_dir, tables);
  for (const auto& [name, table] : tables)
    std::printf("wrote %s (%zu rows)\n", (std::filesystem::path(out_dir) / name).c_str(),
                table.rows.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lattice workbench for deformation maps and interacting thermal states"};
  app.require_subcommand(1);

  std::string config_path;
  std::string suite;
  std::string target;
  std::string out_flag;
  unsigned long long seed_value = 0;

  CLI::App* run = app.add_subcommand("run", "run a verification suite and write its report");
  run->add_option("--config", config_path, "JSON configuration file")->required();
  run->add_option("--suite", suite, "suite name, or 'all'")->required();
  run->add_option("--out", out_flag, "output directory override");
  CLI::Option* run_seed = run->add_option("--seed", seed_value, "seed override");

  CLI::App* plot = app.add_subcommand("plot", "write the scan tables behind a figure");
  plot->add_option("--config", config_path, "JSON configuration file")->required();
  plot->add_option("--target", target, "figure name")->required();
  plot->add_option("--out", out_flag, "output directory override");
  CLI::Option* plot_seed = plot->add_option("--seed", seed_value, "seed override");

  CLI11_PARSE(app, argc, argv);

  try {
    ppalab::RunConfig cfg = ppalab::parse_config_file(config_path);
    if (run_seed->count() > 0 || plot_seed->count() > 0)
      cfg.seed = static_cast<std::uint64_t>(seed_value);
    const std::string out_dir = resolve_out_dir(out_flag, cfg);
    if (run->parsed()) return run_command(cfg, suite, out_dir);
    return plot_command(cfg, target, out_dir);
  } catch (const ppalab::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
