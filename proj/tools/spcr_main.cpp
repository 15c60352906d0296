#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "spcr/cli.hpp"
#include "spcr/errors.hpp"
#include "spcr/io.hpp"
#include "spcr/version.hpp"

namespace {

// Raw option storage; only options the user actually passed override the
// config file, so every default stays config-driven.
struct Cli {
  std::string config_path;
  std::string data_path, x_name, y_name, delimiter;
  std::string output_dir;
  std::string sign, family;
  std::string bootstrap_kind;
  std::string sim_id, sim_method, sim_format;
  std::uint64_t seed = 0;
  int threads = 0;
  int M = 0, p = 0;
  int n_starts = 0, bootstrap_B = 0;
  int n_chains = 0, n_iter = 0, burn_in = 0, thin = 0, n_probes = 0;
  int sim_n = 0, sim_reps = 0, sim_p_basis = 0;
  double noise_sd = 0.0, band_level = 0.0;
  bool emit_chains = false;
};

void add_data_options(CLI::App* sub, Cli& v) {
  sub->add_option("--data", v.data_path, "Input data file (delimited text)");
  sub->add_option("--x", v.x_name, "Covariate column name");
  sub->add_option("--y", v.y_name, "Response column name");
  sub->add_option("--delimiter", v.delimiter, "Field delimiter (one char)");
}

void add_model_options(CLI::App* sub, Cli& v) {
  sub->add_option("-M,--n-extrema", v.M, "Number of interior extrema");
  sub->add_option("-p,--basis", v.p, "Warp basis dimension");
  sub->add_option("--sign", v.sign, "Alternation start: plus or minus");
  sub->add_option("--family", v.family, "Template family: hermite or bspline");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stationary-point estimation for nonparametric regression"};
  app.set_version_flag("--version", spcr::kVersion);
  app.require_subcommand(1);

  Cli v;
  spcr::RunConfig cfg;

  CLI::App* fit = app.add_subcommand(
      "fit", "Point fit with bootstrap intervals and curve band");
  CLI::App* sample = app.add_subcommand(
      "sample", "Posterior sampling with mode-seeded chains");
  CLI::App* simulate =
      app.add_subcommand("simulate", "Run a simulation study");
  CLI::App* validate = app.add_subcommand(
      "validate", "Check config and data without fitting");

  for (CLI::App* sub : {fit, sample, simulate, validate}) {
    sub->add_option("--config", v.config_path,
                    "Config file (structured text); flags override it");
    sub->add_option("--output-dir", v.output_dir, "Report directory");
    sub->add_option("--seed", v.seed, "Global seed");
    sub->add_option("--threads", v.threads, "Worker threads (0 = hardware)");
  }
  for (CLI::App* sub : {fit, sample, validate}) {
    add_data_options(sub, v);
    add_model_options(sub, v);
  }

  fit->add_option("--n-starts", v.n_starts, "Optimizer restarts");
  fit->add_option("--bootstrap-B", v.bootstrap_B, "Bootstrap replicates");
  fit->add_option("--bootstrap", v.bootstrap_kind,
                  "Bootstrap flavor: residual or wlb");
  fit->add_option("--band-level", v.band_level, "Interval level in (0,1)");

  sample->add_option("--chains", v.n_chains, "Number of chains");
  sample->add_option("--iters", v.n_iter, "Iterations per chain");
  sample->add_option("--burn-in", v.burn_in, "Burn-in (-1 = half)");
  sample->add_option("--thin", v.thin, "Keep every thin-th draw");
  sample->add_option("--probes", v.n_probes, "Mode-search probes");
  sample->add_option("--band-level", v.band_level, "Interval level in (0,1)");
  sample->add_flag("--emit-chains", v.emit_chains, "Also write chains.csv");

  simulate->add_option("--design", v.sim_id, "Study design: sim1 or sim2");
  simulate->add_option("--n", v.sim_n, "Sample size per replicate");
  simulate->add_option("--reps", v.sim_reps, "Number of replicates");
  simulate->add_option("--method", v.sim_method,
                       "Interval method: bayes or bootstrap");
  simulate->add_option("--p-basis", v.sim_p_basis,
                       "Basis override (0 = size schedule)");
  simulate->add_option("--noise-sd", v.noise_sd,
                       "Noise level override (>= 0)");
  simulate->add_option("--format", v.sim_format, "Table format: text or csv");
  simulate->add_option("--chains", v.n_chains, "Chains per replicate");
  simulate->add_option("--iters", v.n_iter, "Iterations per chain");
  simulate->add_option("--probes", v.n_probes, "Mode-search probes");
  simulate->add_option("--bootstrap-B", v.bootstrap_B,
                       "Bootstrap replicates per study replicate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << spcr::render_error_json("config", e.what());
    return 2;
  }

  CLI::App* chosen = fit;
  for (CLI::App* sub : {fit, sample, simulate, validate})
    if (sub->parsed()) chosen = sub;

  const auto passed = [&](const char* name) {
    return chosen->count(name) > 0;
  };

  try {
    if (passed("--config")) cfg = spcr::load_config(v.config_path);

    if (chosen == fit) cfg.command = spcr::Command::Fit;
    if (chosen == sample) cfg.command = spcr::Command::Sample;
    if (chosen == simulate) cfg.command = spcr::Command::Simulate;
    if (chosen == validate) cfg.command = spcr::Command::Validate;

    if (passed("--output-dir")) cfg.output_dir = v.output_dir;
    if (passed("--seed")) cfg.seed = v.seed;
    if (passed("--threads")) cfg.n_threads = v.threads;

    if (chosen != simulate) {
      if (passed("--data")) cfg.data_path = v.data_path;
      if (passed("--x")) cfg.x_name = v.x_name;
      if (passed("--y")) cfg.y_name = v.y_name;
      if (passed("--delimiter")) {
        if (v.delimiter.size() != 1)
          throw spcr::ConfigError("--delimiter must be a single character");
        cfg.delimiter = v.delimiter[0];
      }
      if (passed("--n-extrema")) cfg.M = v.M;
      if (passed("--basis")) cfg.p = v.p;
      if (passed("--sign")) cfg.sign = spcr::sign_from_name(v.sign);
      if (passed("--family")) cfg.family = spcr::family_from_name(v.family);
    }

    if (chosen == fit) {
      if (passed("--n-starts")) cfg.n_starts = v.n_starts;
      if (passed("--bootstrap-B")) cfg.bootstrap_B = v.bootstrap_B;
      if (passed("--bootstrap")) cfg.bootstrap_kind = v.bootstrap_kind;
      if (passed("--band-level")) cfg.band_level = v.band_level;
    }
    if (chosen == sample) {
      if (passed("--chains")) cfg.n_chains = v.n_chains;
      if (passed("--iters")) cfg.n_iter = v.n_iter;
      if (passed("--burn-in")) cfg.burn_in = v.burn_in;
      if (passed("--thin")) cfg.thin = v.thin;
      if (passed("--probes")) cfg.n_probes = v.n_probes;
      if (passed("--band-level")) cfg.band_level = v.band_level;
      if (passed("--emit-chains")) cfg.emit_chains = true;
    }
    if (chosen == simulate) {
      if (passed("--design")) cfg.sim_id = spcr::sim_id_from_name(v.sim_id);
      if (passed("--n")) cfg.sim_n = v.sim_n;
      if (passed("--reps")) cfg.sim_reps = v.sim_reps;
      if (passed("--method"))
        cfg.sim_method = spcr::method_from_name(v.sim_method);
      if (passed("--p-basis")) cfg.sim_p_basis = v.sim_p_basis;
      if (passed("--noise-sd")) cfg.sim_noise_sd = v.noise_sd;
      if (passed("--format"))
        cfg.sim_format = spcr::format_from_name(v.sim_format);
      if (passed("--chains")) cfg.n_chains = v.n_chains;
      if (passed("--iters")) cfg.n_iter = v.n_iter;
      if (passed("--probes")) cfg.n_probes = v.n_probes;
      if (passed("--bootstrap-B")) cfg.bootstrap_B = v.bootstrap_B;
    }
  } catch (const spcr::ConfigError& e) {
    std::cerr << spcr::render_error_json("config", e.what());
    return 2;
  } catch (const spcr::DataError& e) {
    std::cerr << spcr::render_error_json("data", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::cerr << spcr::render_error_json("numerical", e.what());
    return 4;
  }

  return spcr::run_command(cfg, std::cout, std::cerr);
}
