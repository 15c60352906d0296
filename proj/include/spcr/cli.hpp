#ifndef SPCR_CLI_HPP
#define SPCR_CLI_HPP

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "spcr/estimate.hpp"
#include "spcr/io.hpp"
#include "spcr/report.hpp"

namespace spcr {

/// One model-selection candidate. AIC = 2 d + n ln(sse / n) with
/// d = p + M + 2 mean-model coordinates.
struct AicRow {
  int p = 0;
  double sse = std::numeric_limits<double>::quiet_NaN();
  double aic = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  bool best = false;  // flags the AIC-minimizing candidate
  std::string error;  // failure note when !ok
};

/// Fits each candidate basis size and tabulates AIC, sorted ascending by AIC
/// with failed candidates last (ties break to smaller p). Fit failures are
/// recorded per candidate and never abort the table.
std::vector<AicRow> model_select(const Dataset& data, const TemplateSpec& spec,
                                 const std::vector<int>& p_grid,
                                 const FitConfig& base);

/// Point fit plus bootstrap intervals and curve band.
Report cmd_fit(const RunConfig& config);

/// Mode-seeded posterior sampling with HPD intervals and posterior band.
Report cmd_sample(const RunConfig& config);

/// Simulation study; the report carries the rendered study table.
Report cmd_simulate(const RunConfig& config);

/// Config and data checks only; reports ingestion stats without fitting.
Report cmd_validate(const RunConfig& config);

/// Machine-readable error document: {"error": {"kind": ..., "message": ...}}.
std::string render_error_json(const std::string& kind,
                              const std::string& message);

/// Dispatches config.command, writes the report files into config.output_dir
/// and echoes the written paths to out. On failure writes the error document
/// to err and returns the exit code: 0 success, 2 config, 3 data,
/// 4 numerical.
int run_command(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace spcr

#endif
