#include "spcr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spcr/bayes.hpp"
#include "spcr/errors.hpp"
#include "spcr/simbench.hpp"

namespace spcr {

namespace {

constexpr int kGrid = 512;
constexpr int kBandDraws = 256;  // curve-band subsample cap

Eigen::VectorXd linspace(double lo, double hi, int n) {
  Eigen::VectorXd g(n);
  for (int i = 0; i < n; ++i)
    g[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
  return g;
}

double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * s[lo] + w * s[hi];
}

// Evenly spaced row subsample, at most cap rows, deterministic.
std::vector<int> subsample_rows(Eigen::Index total, int cap) {
  std::vector<int> idx;
  if (total <= 0) return idx;
  const int m = static_cast<int>(std::min<Eigen::Index>(total, cap));
  idx.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i)
    idx.push_back(static_cast<int>(static_cast<long long>(i) * total / m));
  return idx;
}

struct CurveBands {
  Eigen::VectorXd fit, lo, hi;  // fit = pointwise mean over the subsample
};

CurveBands band_from_rows(const ModelWorkspace& ws, SignSet sign,
                          bool full_coords, const Eigen::MatrixXd& rows,
                          const Eigen::VectorXd& grid_internal, double level) {
  const int G = static_cast<int>(grid_internal.size());
  CurveBands out;
  out.fit = Eigen::VectorXd::Zero(G);
  out.lo = Eigen::VectorXd::Zero(G);
  out.hi = Eigen::VectorXd::Zero(G);
  const std::vector<int> idx = subsample_rows(rows.rows(), kBandDraws);
  if (idx.empty()) return out;

  Eigen::MatrixXd curves(static_cast<Eigen::Index>(idx.size()), G);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Eigen::VectorXd z = rows.row(idx[r]).transpose();
    const ModelParams params =
        full_coords ? ws.unpack_full(z, sign) : ws.unpack_mean(z, sign);
    for (int g = 0; g < G; ++g)
      curves(static_cast<Eigen::Index>(r), g) =
          predict(params, ws.spec(), grid_internal[g]);
  }

  const double ql = 0.5 * (1.0 - level), qh = 1.0 - ql;
  std::vector<double> col(idx.size());
  for (int g = 0; g < G; ++g) {
    for (std::size_t r = 0; r < idx.size(); ++r)
      col[r] = curves(static_cast<Eigen::Index>(r), g);
    out.fit[g] = curves.col(g).mean();
    std::sort(col.begin(), col.end());
    out.lo[g] = quantile_sorted(col, ql);
    out.hi[g] = quantile_sorted(col, qh);
  }
  return out;
}

void fill_provenance(Report& r, const RunConfig& config) {
  r.command = command_name(config.command);
  r.config_canonical = serialize_config(config);
  r.seed = config.seed;
}

void fill_data_block(Report& r, const IngestResult& ing) {
  r.n = ing.data.n();
  r.n_dropped = ing.n_dropped;
  r.x_min = ing.data.x_raw.minCoeff();
  r.x_max = ing.data.x_raw.maxCoeff();
}

void require_hermite(const RunConfig& config) {
  if (config.family != TemplateFamily::Hermite)
    throw ConfigError(std::string("command '") + command_name(config.command) +
                      "' supports the hermite family only");
}

std::string coord_key(const char* stem, int k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%d", stem, k + 1);
  return buf;
}

// Marginal and joint interval columns from draws; degenerate draw sets fall
// back to the point estimate so reports always carry complete rows.
void fill_intervals(Report& r, const Eigen::MatrixXd& draws, int M) {
  r.sp_interval.resize(M, 2);
  r.sp_joint.resize(M, 2);
  if (draws.rows() >= 2) {
    for (int k = 0; k < M; ++k) {
      const auto iv = hpd_interval(draws.col(k), r.band_level);
      r.sp_interval(k, 0) = iv.first;
      r.sp_interval(k, 1) = iv.second;
    }
    const auto joint = bonferroni_joint(draws, r.band_level, M);
    for (int k = 0; k < M; ++k) {
      r.sp_joint(k, 0) = joint[static_cast<std::size_t>(k)].first;
      r.sp_joint(k, 1) = joint[static_cast<std::size_t>(k)].second;
    }
  } else {
    for (int k = 0; k < M; ++k) {
      r.sp_interval(k, 0) = r.sp_interval(k, 1) = r.sp_estimate[k];
      r.sp_joint(k, 0) = r.sp_joint(k, 1) = r.sp_estimate[k];
    }
    r.metrics["interval_degenerate"] = 1.0;
  }
}

}  // namespace

std::vector<AicRow> model_select(const Dataset& data, const TemplateSpec& spec,
                                 const std::vector<int>& p_grid,
                                 const FitConfig& base) {
  if (p_grid.empty())
    throw ConfigError("model selection needs a nonempty basis grid");
  std::vector<AicRow> rows;
  rows.reserve(p_grid.size());
  const double n = static_cast<double>(data.n());
  for (int p : p_grid) {
    AicRow row;
    row.p = p;
    try {
      FitConfig cfg = base;
      cfg.p = p;
      const FitResult fit = fit_mle(data, spec, cfg);
      row.sse = fit.loss;
      const double d = static_cast<double>(p + spec.M() + 2);
      row.aic = 2.0 * d + n * std::log(std::max(fit.loss / n, 1e-30));
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end(), [](const AicRow& a, const AicRow& b) {
    if (a.ok != b.ok) return a.ok;  // failures sort last
    if (!a.ok) return a.p < b.p;
    if (a.aic != b.aic) return a.aic < b.aic;
    return a.p < b.p;
  });
  for (auto& row : rows) {
    if (row.ok) {
      row.best = true;
      break;
    }
  }
  return rows;
}

Report cmd_fit(const RunConfig& config) {
  config.validate();
  require_hermite(config);
  const IngestResult ing =
      ingest_csv(config.data_path, config.x_name, config.y_name,
                 config.delimiter);
  const Dataset& data = ing.data;
  const TemplateSpec spec =
      TemplateSpec::uniform_nodes(config.M, config.family);
  const ModelWorkspace ws(data, spec, config.p);
  const FitConfig fc = config.to_fit_config();
  const FitResult fit = fit_mle_on(ws, fc);

  BootstrapResult boot;
  if (config.bootstrap_kind == "wlb")
    boot = wlb_draws(fit, data, spec, fc, config.bootstrap_B);
  else
    boot = residual_bootstrap(fit, data, spec, fc, config.bootstrap_B);

  Report r;
  fill_provenance(r, config);
  fill_data_block(r, ing);
  r.band_level = config.band_level;

  const int M = config.M;
  r.sp_estimate.resize(M);
  for (int k = 0; k < M; ++k)
    r.sp_estimate[k] = std::clamp(fit.stationary[k], r.x_min, r.x_max);
  fill_intervals(r, boot.draws, M);

  r.grid_x = linspace(r.x_min, r.x_max, kGrid);
  Eigen::VectorXd grid_internal(kGrid);
  for (int g = 0; g < kGrid; ++g)
    grid_internal[g] = data.affine.to_internal(r.grid_x[g]);
  const CurveBands cb = band_from_rows(ws, config.sign, false, boot.params,
                                       grid_internal, config.band_level);
  r.curve_fit.resize(kGrid);
  for (int g = 0; g < kGrid; ++g)
    r.curve_fit[g] = predict(fit.best, spec, grid_internal[g]);
  if (boot.params.rows() >= 2) {
    r.curve_lo = cb.lo;
    r.curve_hi = cb.hi;
  } else {
    r.curve_lo = r.curve_fit;
    r.curve_hi = r.curve_fit;
  }

  const double n = static_cast<double>(data.n());
  const double sigma2 = std::max(fit.loss / n, 1e-30);
  int converged = 0;
  for (const StartRecord& s : fit.starts) converged += s.converged ? 1 : 0;
  r.metrics["sse"] = fit.loss;
  r.metrics["sigma_hat"] = std::sqrt(sigma2);
  r.metrics["aic"] =
      2.0 * static_cast<double>(config.p + M + 2) + n * std::log(sigma2);
  r.metrics["n_starts_converged"] = static_cast<double>(converged);
  r.metrics["bootstrap_kept"] = static_cast<double>(boot.draws.rows());
  r.metrics["bootstrap_failed"] = static_cast<double>(boot.n_failed);
  r.metrics["bootstrap_warm_best"] = static_cast<double>(boot.warm_best_count);
  r.sp_draws = boot.draws;
  return r;
}

Report cmd_sample(const RunConfig& config) {
  config.validate();
  require_hermite(config);
  const IngestResult ing =
      ingest_csv(config.data_path, config.x_name, config.y_name,
                 config.delimiter);
  const Dataset& data = ing.data;
  const TemplateSpec spec =
      TemplateSpec::uniform_nodes(config.M, config.family);
  const ModelWorkspace ws(data, spec, config.p);

  const FitConfig pc = config.to_fit_config();
  const std::vector<Mode> modes =
      find_modes_on(ws, pc, config.prior, config.n_probes);
  const ChainConfig cc = config.to_chain_config();
  const PosteriorChains chains = run_chains_on(ws, modes, cc, config.prior);

  Report r;
  fill_provenance(r, config);
  fill_data_block(r, ing);
  r.band_level = config.band_level;

  const int M = config.M;
  r.sp_estimate.resize(M);
  for (int k = 0; k < M; ++k)
    r.sp_estimate[k] =
        std::clamp(chains.sp_draws.col(k).mean(), r.x_min, r.x_max);
  fill_intervals(r, chains.sp_draws, M);

  Eigen::Index total = 0;
  for (const auto& m : chains.draws) total += m.rows();
  Eigen::MatrixXd pooled(total, ws.d_full());
  Eigen::Index at = 0;
  for (const auto& m : chains.draws) {
    pooled.middleRows(at, m.rows()) = m;
    at += m.rows();
  }

  r.grid_x = linspace(r.x_min, r.x_max, kGrid);
  Eigen::VectorXd grid_internal(kGrid);
  for (int g = 0; g < kGrid; ++g)
    grid_internal[g] = data.affine.to_internal(r.grid_x[g]);
  const CurveBands cb = band_from_rows(ws, config.sign, true, pooled,
                                       grid_internal, config.band_level);
  r.curve_fit = cb.fit;
  r.curve_lo = cb.lo;
  r.curve_hi = cb.hi;

  const ChainDiagnostics diag = chain_diagnostics(chains);
  for (std::size_t c = 0; c < chains.accept_rates.size(); ++c) {
    r.metrics[coord_key("accept_rate", static_cast<int>(c))] =
        chains.accept_rates[c];
    r.metrics[coord_key("c_final", static_cast<int>(c))] = chains.c_final[c];
    r.metrics[coord_key("stuck", static_cast<int>(c))] =
        static_cast<double>(chains.stuck[c]);
  }
  for (int k = 0; k < static_cast<int>(diag.dispersion_ratio.size()); ++k)
    r.metrics[coord_key("dispersion_ratio", k)] = diag.dispersion_ratio[k];
  r.metrics["n_modes"] = static_cast<double>(modes.size());
  r.metrics["log_post_best"] = modes.front().log_post;
  r.metrics["kept_per_chain"] = static_cast<double>(chains.kept_per_chain());

  r.sp_draws = chains.sp_draws;
  r.chain_draws = chains.draws;
  return r;
}

Report cmd_simulate(const RunConfig& config) {
  config.validate();
  const SimDesign design = config.to_sim_design();
  const StudyResult res = run_study(design);

  Report r;
  fill_provenance(r, config);
  r.table_text = emit_tables(res, config.sim_format);

  const int M = static_cast<int>(res.truth.size());
  for (int k = 0; k < M; ++k) {
    r.metrics[coord_key("truth", k)] = res.truth[k];
    r.metrics[coord_key("coverage90", k)] = res.coverage90[k];
    r.metrics[coord_key("coverage95", k)] = res.coverage95[k];
    r.metrics[coord_key("coverage99", k)] = res.coverage99[k];
    r.metrics[coord_key("rmse", k)] = res.rmse[k];
    r.metrics[coord_key("bias", k)] = res.bias[k];
    r.metrics[coord_key("avg_post_sd", k)] = res.avg_post_sd[k];
  }
  r.metrics["joint95"] = res.joint95;
  r.metrics["n_failed"] = static_cast<double>(res.n_failed);
  r.metrics["n_ok"] = static_cast<double>(res.n_ok());
  r.metrics["p_basis"] = static_cast<double>(res.p);
  r.metrics["sim_n"] = static_cast<double>(design.n);
  return r;
}

Report cmd_validate(const RunConfig& config) {
  config.validate();
  const IngestResult ing =
      ingest_csv(config.data_path, config.x_name, config.y_name,
                 config.delimiter);

  Report r;
  fill_provenance(r, config);
  fill_data_block(r, ing);
  const double n = static_cast<double>(ing.data.n());
  const double y_mean = ing.data.y_obs.mean();
  const double y_sd = n > 1 ? std::sqrt((ing.data.y_obs.array() - y_mean)
                                            .square()
                                            .sum() /
                                        (n - 1.0))
                            : 0.0;
  r.metrics["y_min"] = ing.data.y_obs.minCoeff();
  r.metrics["y_max"] = ing.data.y_obs.maxCoeff();
  r.metrics["y_sd"] = y_sd;
  r.metrics["d_full"] = static_cast<double>(config.p + config.M + 3);
  r.metrics["weakly_identified"] =
      n <= static_cast<double>(config.p + config.M + 3) ? 1.0 : 0.0;
  return r;
}

std::string render_error_json(const std::string& kind,
                              const std::string& message) {
  nlohmann::json j;
  j["error"]["kind"] = kind;
  j["error"]["message"] = message;
  return j.dump(2) + "\n";
}

int run_command(const RunConfig& config, std::ostream& out,
                std::ostream& err) {
  try {
    Report r;
    switch (config.command) {
      case Command::Fit: r = cmd_fit(config); break;
      case Command::Sample: r = cmd_sample(config); break;
      case Command::Simulate: r = cmd_simulate(config); break;
      default: r = cmd_validate(config); break;
    }
    const std::vector<std::string> written =
        write_report(r, config.output_dir, config.emit_chains);
    for (const std::string& p : written) out << "wrote " << p << '\n';
    return 0;
  } catch (const ConfigError& e) {
    err << render_error_json("config", e.what());
    return 2;
  } catch (const DataError& e) {
    err << render_error_json("data", e.what());
    return 3;
  } catch (const std::exception& e) {
    err << render_error_json("numerical", e.what());
    return 4;
  }
}

}  // namespace spcr
