#include "spcr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "spcr/errors.hpp"
#include "spcr/version.hpp"

namespace spcr {

namespace {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Linear-interpolated order statistic of a sorted vector, q in [0, 1].
double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * s[lo] + w * s[hi];
}

// Gaussian KDE rows for one coordinate: Silverman bandwidth on a 256-point
// grid spanning the draws plus three bandwidths either side.
void append_kde(std::ostringstream& os, int coord,
                const Eigen::VectorXd& col) {
  const Eigen::Index n = col.size();
  if (n < 2) return;
  std::vector<double> s(col.data(), col.data() + n);
  std::sort(s.begin(), s.end());
  const double mean = col.mean();
  const double sd = std::sqrt((col.array() - mean).square().sum() /
                              static_cast<double>(n - 1));
  const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  if (!(h > 0.0)) h = 1e-6 * std::max(1.0, std::abs(mean));

  const double lo = s.front() - 3.0 * h, hi = s.back() + 3.0 * h;
  const double norm =
      1.0 / (static_cast<double>(n) * h * std::sqrt(2.0 * std::numbers::pi));
  const int G = 256;
  for (int i = 0; i < G; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / (G - 1);
    double dens = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double u = (x - col[j]) / h;
      dens += std::exp(-0.5 * u * u);
    }
    os << (coord + 1) << ',' << g17(x) << ',' << g17(dens * norm) << '\n';
  }
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write output file: " + path.string());
  out << body;
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace

std::string config_hash(const std::string& canonical) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string render_report_text(const Report& r) {
  std::ostringstream os;
  char buf[256];
  os << "stationary point report\n";
  os << "=======================\n";
  os << "command      " << r.command << '\n';
  os << "version      " << kVersion << '\n';
  os << "config hash  " << config_hash(r.config_canonical) << '\n';
  os << "seed         " << r.seed << '\n';
  if (r.n > 0) {
    std::snprintf(buf, sizeof buf,
                  "data         n=%d (%d rows dropped), x in [%.6g, %.6g]\n",
                  r.n, r.n_dropped, r.x_min, r.x_max);
    os << buf;
  }
  if (!r.metrics.empty()) {
    os << "\nmetrics\n";
    for (const auto& [key, value] : r.metrics) {
      std::snprintf(buf, sizeof buf, "  %-24s %.10g\n", key.c_str(), value);
      os << buf;
    }
  }
  if (r.sp_estimate.size() > 0) {
    std::snprintf(buf, sizeof buf,
                  "\nstationary points (%.0f%% marginal, joint-adjusted)\n",
                  100.0 * r.band_level);
    os << buf;
    os << "  #  estimate      lower         upper         joint lower   "
          "joint upper\n";
    for (Eigen::Index k = 0; k < r.sp_estimate.size(); ++k) {
      std::snprintf(buf, sizeof buf,
                    "  %-2lld %-12.6f  %-12.6f  %-12.6f  %-12.6f  %-12.6f\n",
                    static_cast<long long>(k + 1), r.sp_estimate[k],
                    r.sp_interval(k, 0), r.sp_interval(k, 1), r.sp_joint(k, 0),
                    r.sp_joint(k, 1));
      os << buf;
    }
  }
  if (!r.table_text.empty()) {
    os << "\nstudy table\n";
    os << r.table_text;
  }
  return os.str();
}

std::string render_report_json(const Report& r) {
  nlohmann::json j;
  j["command"] = r.command;
  j["version"] = kVersion;
  j["config_hash"] = config_hash(r.config_canonical);
  j["seed"] = r.seed;
  if (!r.config_canonical.empty())
    j["config"] = nlohmann::json::parse(r.config_canonical);
  if (r.n > 0) {
    nlohmann::json d;
    d["n"] = r.n;
    d["n_dropped"] = r.n_dropped;
    d["x_min"] = r.x_min;
    d["x_max"] = r.x_max;
    j["data"] = d;
  }
  j["band_level"] = r.band_level;
  nlohmann::json sps = nlohmann::json::array();
  for (Eigen::Index k = 0; k < r.sp_estimate.size(); ++k) {
    nlohmann::json sp;
    sp["index"] = k + 1;
    sp["estimate"] = r.sp_estimate[k];
    sp["lower"] = r.sp_interval(k, 0);
    sp["upper"] = r.sp_interval(k, 1);
    sp["joint_lower"] = r.sp_joint(k, 0);
    sp["joint_upper"] = r.sp_joint(k, 1);
    sps.push_back(sp);
  }
  j["stationary_points"] = sps;
  nlohmann::json m;
  for (const auto& [key, value] : r.metrics) m[key] = value;
  j["metrics"] = m;
  if (!r.table_text.empty()) j["table"] = r.table_text;
  return j.dump(2) + "\n";
}

std::string render_curve_csv(const Report& r) {
  std::ostringstream os;
  os << "x,fit,lower,upper\n";
  for (Eigen::Index i = 0; i < r.grid_x.size(); ++i)
    os << g17(r.grid_x[i]) << ',' << g17(r.curve_fit[i]) << ','
       << g17(r.curve_lo[i]) << ',' << g17(r.curve_hi[i]) << '\n';
  return os.str();
}

std::string render_sp_posterior_csv(const Report& r) {
  std::ostringstream os;
  os << "coord,x,density\n";
  for (Eigen::Index k = 0; k < r.sp_draws.cols(); ++k)
    append_kde(os, static_cast<int>(k), r.sp_draws.col(k));
  return os.str();
}

std::string render_chains_csv(const Report& r) {
  std::ostringstream os;
  os << "chain,step";
  const Eigen::Index d =
      r.chain_draws.empty() ? 0 : r.chain_draws.front().cols();
  for (Eigen::Index j = 0; j < d; ++j) os << ",z" << j;
  os << '\n';
  for (std::size_t c = 0; c < r.chain_draws.size(); ++c) {
    const Eigen::MatrixXd& m = r.chain_draws[c];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      os << c << ',' << i;
      for (Eigen::Index j = 0; j < m.cols(); ++j) os << ',' << g17(m(i, j));
      os << '\n';
    }
  }
  return os.str();
}

std::vector<std::string> write_report(const Report& r, const std::string& dir,
                                      bool emit_chains) {
  namespace fs = std::filesystem;
  const fs::path base(dir);
  std::error_code ec;
  fs::create_directories(base, ec);
  if (ec && !fs::is_directory(base))
    throw DataError("cannot create output directory: " + dir);

  std::vector<std::string> written;
  const auto emit = [&](const char* name, const std::string& body) {
    const fs::path p = base / name;
    write_file(p, body);
    written.push_back(p.string());
  };

  emit("report.txt", render_report_text(r));
  emit("report.json", render_report_json(r));
  if (r.grid_x.size() > 0) emit("curve.csv", render_curve_csv(r));
  if (r.sp_draws.rows() > 1 && r.sp_draws.cols() > 0)
    emit("sp_posterior.csv", render_sp_posterior_csv(r));
  if (emit_chains && !r.chain_draws.empty())
    emit("chains.csv", render_chains_csv(r));
  return written;
}

}  // namespace spcr
