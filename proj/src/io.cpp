#include "spcr/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spcr/errors.hpp"
#include "spcr/rng.hpp"

namespace spcr {

namespace {

using nlohmann::json;

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return std::isspace(c) == 0; };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_row(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

// true when a finite value was parsed; false for blank or NaN cells (the row
// is dropped); anything else is a hard error naming the line.
bool parse_cell(const std::string& cell, int line_no, const std::string& col,
                double& out) {
  if (cell.empty()) return false;
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e)
    throw DataError("line " + std::to_string(line_no) + ": column '" + col +
                    "' has a non-numeric entry '" + cell + "'");
  if (std::isnan(v)) return false;
  if (!std::isfinite(v))
    throw DataError("line " + std::to_string(line_no) + ": column '" + col +
                    "' has a non-finite entry");
  out = v;
  return true;
}

Command parse_command(const std::string& s) {
  if (s == "fit") return Command::Fit;
  if (s == "sample") return Command::Sample;
  if (s == "simulate") return Command::Simulate;
  if (s == "validate") return Command::Validate;
  throw ConfigError(
      "command must be one of fit, sample, simulate, validate (got '" + s +
      "')");
}

std::string qualify(const std::string& scope, const char* key) {
  return scope.empty() ? std::string(key) : scope + "." + key;
}

void check_keys(const json& obj, const std::string& scope,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) {
      if (it.key() == a) {
        known = true;
        break;
      }
    }
    if (!known)
      throw ConfigError("unknown config key: " + qualify(scope, it.key().c_str()));
  }
}

const json* section(const json& root, const char* key) {
  if (!root.contains(key)) return nullptr;
  const json& v = root.at(key);
  if (!v.is_object())
    throw ConfigError(std::string("config section '") + key +
                      "' must be an object");
  return &v;
}

template <typename T>
void read_field(const json& obj, const std::string& scope, const char* key,
                T& dst) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field " + qualify(scope, key) +
                      " has the wrong type");
  }
}

}  // namespace

IngestResult ingest_csv(const std::string& path, const std::string& x_name,
                        const std::string& y_name, char delimiter) {
  if (x_name == y_name)
    throw DataError("x and y must name distinct columns");
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("data file is empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_row(line, delimiter);
  int xi = -1, yi = -1;
  for (int j = 0; j < static_cast<int>(header.size()); ++j) {
    if (header[static_cast<std::size_t>(j)] == x_name) xi = j;
    if (header[static_cast<std::size_t>(j)] == y_name) yi = j;
  }
  if (xi < 0)
    throw DataError("column '" + x_name + "' not found in header of " + path);
  if (yi < 0)
    throw DataError("column '" + y_name + "' not found in header of " + path);

  std::vector<double> xs, ys;
  IngestResult res;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      ++res.n_dropped;
      res.dropped_rows.push_back(line_no);
      continue;
    }
    const std::vector<std::string> cells = split_row(line, delimiter);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(cells.size()));
    double xv = 0.0, yv = 0.0;
    const bool okx =
        parse_cell(cells[static_cast<std::size_t>(xi)], line_no, x_name, xv);
    const bool oky =
        parse_cell(cells[static_cast<std::size_t>(yi)], line_no, y_name, yv);
    if (!okx || !oky) {
      ++res.n_dropped;
      res.dropped_rows.push_back(line_no);
      continue;
    }
    xs.push_back(xv);
    ys.push_back(yv);
  }
  if (xs.empty()) throw DataError("no usable rows in " + path);

  Eigen::VectorXd x(static_cast<Eigen::Index>(xs.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    x[static_cast<Eigen::Index>(i)] = xs[i];
    y[static_cast<Eigen::Index>(i)] = ys[i];
  }
  res.data = Dataset::from_xy(std::move(x), std::move(y));
  return res;
}

const char* command_name(Command c) {
  switch (c) {
    case Command::Fit: return "fit";
    case Command::Sample: return "sample";
    case Command::Simulate: return "simulate";
    default: return "validate";
  }
}

const char* sign_name(SignSet s) {
  return s == SignSet::Plus ? "plus" : "minus";
}

const char* family_name(TemplateFamily f) {
  return f == TemplateFamily::Hermite ? "hermite" : "bspline";
}

SignSet sign_from_name(const std::string& s) {
  if (s == "plus") return SignSet::Plus;
  if (s == "minus") return SignSet::Minus;
  throw ConfigError("model.sign must be 'plus' or 'minus' (got '" + s + "')");
}

TemplateFamily family_from_name(const std::string& s) {
  if (s == "hermite") return TemplateFamily::Hermite;
  if (s == "bspline") return TemplateFamily::BSpline;
  throw ConfigError("model.family must be 'hermite' or 'bspline' (got '" + s +
                    "')");
}

SimId sim_id_from_name(const std::string& s) {
  if (s == "sim1") return SimId::Sim1;
  if (s == "sim2") return SimId::Sim2;
  throw ConfigError("sim.id must be 'sim1' or 'sim2' (got '" + s + "')");
}

StudyMethod method_from_name(const std::string& s) {
  if (s == "bayes") return StudyMethod::Bayes;
  if (s == "bootstrap") return StudyMethod::Bootstrap;
  throw ConfigError("sim.method must be 'bayes' or 'bootstrap' (got '" + s +
                    "')");
}

TableFormat format_from_name(const std::string& s) {
  if (s == "text") return TableFormat::Text;
  if (s == "csv") return TableFormat::Csv;
  throw ConfigError("sim.format must be 'text' or 'csv' (got '" + s + "')");
}

RunConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid structured text: ") +
                      e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  check_keys(root, "", {"command", "seed", "threads", "data", "model", "fit",
                        "chains", "prior", "sim", "output"});

  RunConfig c;
  if (root.contains("command")) {
    std::string s;
    read_field(root, "", "command", s);
    c.command = parse_command(s);
  }
  read_field(root, "", "seed", c.seed);
  read_field(root, "", "threads", c.n_threads);

  if (const json* d = section(root, "data")) {
    check_keys(*d, "data", {"path", "x", "y", "delimiter"});
    read_field(*d, "data", "path", c.data_path);
    read_field(*d, "data", "x", c.x_name);
    read_field(*d, "data", "y", c.y_name);
    if (d->contains("delimiter")) {
      std::string s;
      read_field(*d, "data", "delimiter", s);
      if (s.size() != 1)
        throw ConfigError("data.delimiter must be a single character");
      c.delimiter = s[0];
    }
  }

  if (const json* m = section(root, "model")) {
    check_keys(*m, "model", {"M", "p", "sign", "family"});
    read_field(*m, "model", "M", c.M);
    read_field(*m, "model", "p", c.p);
    if (m->contains("sign")) {
      std::string s;
      read_field(*m, "model", "sign", s);
      c.sign = sign_from_name(s);
    }
    if (m->contains("family")) {
      std::string s;
      read_field(*m, "model", "family", s);
      c.family = family_from_name(s);
    }
  }

  if (const json* f = section(root, "fit")) {
    check_keys(*f, "fit",
               {"n_starts", "max_iter", "grad_tol", "start_dispersion",
                "bootstrap_B", "bootstrap"});
    read_field(*f, "fit", "n_starts", c.n_starts);
    read_field(*f, "fit", "max_iter", c.max_iter);
    read_field(*f, "fit", "grad_tol", c.grad_tol);
    read_field(*f, "fit", "start_dispersion", c.start_dispersion);
    read_field(*f, "fit", "bootstrap_B", c.bootstrap_B);
    read_field(*f, "fit", "bootstrap", c.bootstrap_kind);
  }

  if (const json* ch = section(root, "chains")) {
    check_keys(*ch, "chains",
               {"n_chains", "n_iter", "burn_in", "thin", "target_accept",
                "c_init", "proposal_numerator", "n_probes"});
    read_field(*ch, "chains", "n_chains", c.n_chains);
    read_field(*ch, "chains", "n_iter", c.n_iter);
    read_field(*ch, "chains", "burn_in", c.burn_in);
    read_field(*ch, "chains", "thin", c.thin);
    read_field(*ch, "chains", "target_accept", c.target_accept);
    read_field(*ch, "chains", "c_init", c.c_init);
    read_field(*ch, "chains", "proposal_numerator", c.proposal_numerator);
    read_field(*ch, "chains", "n_probes", c.n_probes);
  }

  if (const json* pr = section(root, "prior")) {
    check_keys(*pr, "prior", {"sd_warp", "sd_heights", "sd_log_sigma"});
    read_field(*pr, "prior", "sd_warp", c.prior.sd_warp);
    read_field(*pr, "prior", "sd_heights", c.prior.sd_heights);
    read_field(*pr, "prior", "sd_log_sigma", c.prior.sd_log_sigma);
  }

  if (const json* s = section(root, "sim")) {
    check_keys(*s, "sim",
               {"id", "n", "reps", "method", "p_basis", "noise_sd", "format"});
    if (s->contains("id")) {
      std::string v;
      read_field(*s, "sim", "id", v);
      c.sim_id = sim_id_from_name(v);
    }
    read_field(*s, "sim", "n", c.sim_n);
    read_field(*s, "sim", "reps", c.sim_reps);
    if (s->contains("method")) {
      std::string v;
      read_field(*s, "sim", "method", v);
      c.sim_method = method_from_name(v);
    }
    read_field(*s, "sim", "p_basis", c.sim_p_basis);
    if (s->contains("noise_sd") && !s->at("noise_sd").is_null()) {
      double v = 0.0;
      read_field(*s, "sim", "noise_sd", v);
      c.sim_noise_sd = v;
    }
    if (s->contains("format")) {
      std::string v;
      read_field(*s, "sim", "format", v);
      c.sim_format = format_from_name(v);
    }
  }

  if (const json* o = section(root, "output")) {
    check_keys(*o, "output", {"dir", "emit_chains", "band_level"});
    read_field(*o, "output", "dir", c.output_dir);
    read_field(*o, "output", "emit_chains", c.emit_chains);
    read_field(*o, "output", "band_level", c.band_level);
  }

  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const RunConfig& c) {
  json j;
  j["command"] = command_name(c.command);
  j["seed"] = c.seed;
  j["threads"] = c.n_threads;

  json d;
  d["path"] = c.data_path;
  d["x"] = c.x_name;
  d["y"] = c.y_name;
  d["delimiter"] = std::string(1, c.delimiter);
  j["data"] = d;

  json m;
  m["M"] = c.M;
  m["p"] = c.p;
  m["sign"] = sign_name(c.sign);
  m["family"] = family_name(c.family);
  j["model"] = m;

  json f;
  f["n_starts"] = c.n_starts;
  f["max_iter"] = c.max_iter;
  f["grad_tol"] = c.grad_tol;
  f["start_dispersion"] = c.start_dispersion;
  f["bootstrap_B"] = c.bootstrap_B;
  f["bootstrap"] = c.bootstrap_kind;
  j["fit"] = f;

  json ch;
  ch["n_chains"] = c.n_chains;
  ch["n_iter"] = c.n_iter;
  ch["burn_in"] = c.burn_in;
  ch["thin"] = c.thin;
  ch["target_accept"] = c.target_accept;
  ch["c_init"] = c.c_init;
  ch["proposal_numerator"] = c.proposal_numerator;
  ch["n_probes"] = c.n_probes;
  j["chains"] = ch;

  json pr;
  pr["sd_warp"] = c.prior.sd_warp;
  pr["sd_heights"] = c.prior.sd_heights;
  pr["sd_log_sigma"] = c.prior.sd_log_sigma;
  j["prior"] = pr;

  json s;
  s["id"] = c.sim_id == SimId::Sim2 ? "sim2" : "sim1";
  s["n"] = c.sim_n;
  s["reps"] = c.sim_reps;
  s["method"] = c.sim_method == StudyMethod::Bayes ? "bayes" : "bootstrap";
  s["p_basis"] = c.sim_p_basis;
  s["noise_sd"] = c.sim_noise_sd ? json(*c.sim_noise_sd) : json(nullptr);
  s["format"] = c.sim_format == TableFormat::Csv ? "csv" : "text";
  j["sim"] = s;

  json o;
  o["dir"] = c.output_dir;
  o["emit_chains"] = c.emit_chains;
  o["band_level"] = c.band_level;
  j["output"] = o;

  return j.dump(2) + "\n";
}

void RunConfig::validate() const {
  const bool needs_data = command == Command::Fit ||
                          command == Command::Sample ||
                          command == Command::Validate;
  if (needs_data && data_path.empty())
    throw ConfigError(std::string("data.path is required for command '") +
                      command_name(command) + "'");
  if (M < 1) throw ConfigError("model.M must be >= 1");
  if (p < 1) throw ConfigError("model.p must be >= 1");
  if (bootstrap_B < 1) throw ConfigError("fit.bootstrap_B must be >= 1");
  if (bootstrap_kind != "residual" && bootstrap_kind != "wlb")
    throw ConfigError("fit.bootstrap must be 'residual' or 'wlb'");
  if (!(band_level > 0.0 && band_level < 1.0))
    throw ConfigError("output.band_level must lie in (0, 1)");
  if (output_dir.empty()) throw ConfigError("output.dir must be nonempty");
  prior.validate();
  to_fit_config().validate();
  to_chain_config().validate();
  if (command == Command::Simulate) to_sim_design().validate();
}

FitConfig RunConfig::to_fit_config() const {
  FitConfig f;
  f.p = p;
  f.M = M;
  f.sign = sign;
  f.n_starts = n_starts;
  f.max_iter = max_iter;
  f.grad_tol = grad_tol;
  f.seed = seed;
  f.start_dispersion = start_dispersion;
  f.n_threads = n_threads;
  return f;
}

ChainConfig RunConfig::to_chain_config() const {
  ChainConfig cc;
  cc.n_chains = n_chains;
  cc.n_iter = n_iter;
  cc.burn_in = burn_in;
  cc.thin = thin;
  cc.target_accept = target_accept;
  cc.c_init = c_init;
  cc.proposal_numerator = proposal_numerator;
  cc.seed = Rng::derive(seed, 0x636861696e73ull);  // chain stream, not starts
  cc.n_threads = n_threads;
  return cc;
}

SimDesign RunConfig::to_sim_design() const {
  SimDesign d;
  d.id = sim_id;
  d.n = sim_n;
  d.reps = sim_reps;
  d.seed = seed;
  d.method = sim_method;
  d.p_basis = sim_p_basis;
  d.noise_sd = sim_noise_sd;
  d.n_chains = n_chains;
  d.n_iter = n_iter;
  d.n_probes = n_probes;
  d.bootstrap_B = bootstrap_B;
  d.n_threads = n_threads;
  d.prior = prior;
  return d;
}

}  // namespace spcr
