#ifndef SPCR_REPORT_HPP
#define SPCR_REPORT_HPP

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace spcr {

/// Everything a run reports. Rendering is deterministic: no timestamps, no
/// environment probes, map-ordered metrics, fixed float formats. Identical
/// config and seed therefore reproduce the machine-readable outputs byte for
/// byte. Stationary-point estimates are clamped to the observed x range
/// before they land here; intervals are reported as computed.
struct Report {
  std::string command;
  std::string config_canonical;  // canonical config document, hashed below
  std::uint64_t seed = 0;

  int n = 0;
  int n_dropped = 0;
  double x_min = 0.0;
  double x_max = 0.0;

  // Fitted curve on a 512-point grid, user scale, with interval band.
  Eigen::VectorXd grid_x, curve_fit, curve_lo, curve_hi;

  double band_level = 0.95;
  Eigen::VectorXd sp_estimate;  // ascending, inside [x_min, x_max]
  Eigen::MatrixXd sp_interval;  // M x 2 marginal intervals at band_level
  Eigen::MatrixXd sp_joint;     // M x 2 joint (Bonferroni) intervals

  std::map<std::string, double> metrics;
  std::string table_text;  // study table, simulate command only

  Eigen::MatrixXd sp_draws;                  // pooled draws behind the KDE
  std::vector<Eigen::MatrixXd> chain_draws;  // raw chains, optional output
};

/// 64-bit FNV-1a over the canonical config text, rendered as 16 hex digits.
std::string config_hash(const std::string& canonical);

std::string render_report_text(const Report& r);
std::string render_report_json(const Report& r);
std::string render_curve_csv(const Report& r);
std::string render_sp_posterior_csv(const Report& r);
std::string render_chains_csv(const Report& r);

/// Writes report.txt, report.json, and any populated data files (curve.csv,
/// sp_posterior.csv, chains.csv when emit_chains) into dir, creating it as
/// needed. Returns the written paths in emission order.
std::vector<std::string> write_report(const Report& r, const std::string& dir,
                                      bool emit_chains);

}  // namespace spcr

#endif
