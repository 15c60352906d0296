#ifndef SPCR_IO_HPP
#define SPCR_IO_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spcr/bayes.hpp"
#include "spcr/estimate.hpp"
#include "spcr/model.hpp"
#include "spcr/simbench.hpp"
#include "spcr/template_fn.hpp"

namespace spcr {

/// Parsed data file plus ingestion bookkeeping. Row numbers are file line
/// numbers (header is line 1, first data row is line 2).
struct IngestResult {
  Dataset data;
  int n_dropped = 0;              // blank or NaN rows dropped, never fatal
  std::vector<int> dropped_rows;  // line numbers of the dropped rows
};

/// Reads a delimited text file with a mandatory header row and returns the
/// named columns as a Dataset. Blank cells and NaN entries drop the whole row
/// with a count; unparseable or infinite cells, missing columns, and a missing
/// file raise DataError naming the offending line.
IngestResult ingest_csv(const std::string& path, const std::string& x_name,
                        const std::string& y_name, char delimiter = ',');

enum class Command { Fit, Sample, Simulate, Validate };

/// Everything a run needs, assembled from the config file plus command-line
/// overrides. Sections mirror the config schema: data, model, fit, chains,
/// prior, sim, output, and the global seed/threads pair.
struct RunConfig {
  Command command = Command::Fit;

  // data
  std::string data_path;
  std::string x_name = "x";
  std::string y_name = "y";
  char delimiter = ',';

  // model
  int M = 1;
  int p = 5;
  SignSet sign = SignSet::Plus;
  TemplateFamily family = TemplateFamily::Hermite;

  // fit
  int n_starts = 20;
  int max_iter = 500;
  double grad_tol = 1e-6;
  double start_dispersion = 1.0;
  int bootstrap_B = 200;
  std::string bootstrap_kind = "residual";  // residual | wlb

  // chains
  int n_chains = 4;
  int n_iter = 4000;
  int burn_in = -1;  // -1 = half of n_iter
  int thin = 1;
  double target_accept = 0.23;
  double c_init = 1.0;
  double proposal_numerator = 2.4;
  int n_probes = 5;

  PriorSpec prior;

  // sim
  SimId sim_id = SimId::Sim1;
  int sim_n = 100;
  int sim_reps = 50;
  StudyMethod sim_method = StudyMethod::Bayes;
  int sim_p_basis = 0;  // 0 = size schedule decides
  std::optional<double> sim_noise_sd;
  TableFormat sim_format = TableFormat::Text;

  // output
  std::string output_dir = "out";
  bool emit_chains = false;
  double band_level = 0.95;

  std::uint64_t seed = 1;
  int n_threads = 0;

  /// Command-specific completeness: fit/sample/validate need data.path,
  /// knobs must be in range. Throws ConfigError with the field name.
  void validate() const;

  FitConfig to_fit_config() const;
  ChainConfig to_chain_config() const;
  SimDesign to_sim_design() const;
};

/// Parses a config document (structured text, nested sections). Unknown keys
/// and type mismatches raise ConfigError naming the field.
RunConfig parse_config_text(const std::string& text);

/// Reads and parses a config file; missing file raises ConfigError.
RunConfig load_config(const std::string& path);

/// Canonical serialization: keys sorted, stable layout. parse then serialize
/// is idempotent, so serialize(parse(serialize(parse(x)))) equals
/// serialize(parse(x)) byte for byte.
std::string serialize_config(const RunConfig& config);

const char* command_name(Command c);
const char* sign_name(SignSet s);
const char* family_name(TemplateFamily f);

/// Enum parsers shared by the config reader and command-line overrides.
/// All throw ConfigError naming the valid values.
SignSet sign_from_name(const std::string& s);
TemplateFamily family_from_name(const std::string& s);
SimId sim_id_from_name(const std::string& s);
StudyMethod method_from_name(const std::string& s);
TableFormat format_from_name(const std::string& s);

}  // namespace spcr

#endif
