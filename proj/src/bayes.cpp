#include "spcr/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spcr/errors.hpp"
#include "spcr/parallel.hpp"
#include "spcr/rng.hpp"

namespace spcr {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double normal_logpdf_sum(const Eigen::VectorXd& z, double sd) {
  const double n = static_cast<double>(z.size());
  return -0.5 * n * (kLog2Pi + 2.0 * std::log(sd)) -
         z.squaredNorm() / (2.0 * sd * sd);
}

double normal_logpdf(double z, double sd) {
  return -0.5 * (kLog2Pi + 2.0 * std::log(sd)) - z * z / (2.0 * sd * sd);
}

double log_prior(const ModelParams& params, const PriorSpec& prior) {
  double lp = normal_logpdf(params.heights.lambda0, prior.sd_heights);
  lp += normal_logpdf_sum(params.heights.l, prior.sd_heights);
  lp += normal_logpdf_sum(params.y_warp, prior.sd_warp);
  lp += normal_logpdf(params.log_sigma, prior.sd_log_sigma);
  return lp;
}

/// Regularized inverse: eigenvalues floored at 1e-8 of the largest before
/// inverting, so saddle-adjacent curvature still yields a usable proposal.
Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& H) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  if (es.info() != Eigen::Success)
    throw NumericalError("Hessian eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  if (!(top > 0.0))
    throw NumericalError("Hessian has no positive curvature at a mode");
  const double floor = 1e-8 * top;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    ev[i] = 1.0 / std::max(ev[i], floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Target abstraction shared by the model posterior and validation targets.
struct MhTarget {
  int d = 0;
  int M = 0;  // stationary-point columns; 0 = none
  std::function<double(const Eigen::VectorXd&)> log_density;
  // Fills M user-scale stationary points of a kept draw; unused when M = 0.
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> sp_fill;
};

struct SeedMode {
  const Eigen::VectorXd* z;
  double log_post;
  const Eigen::MatrixXd* inv_hess;
};

struct ChainOutcome {
  Eigen::MatrixXd kept;  // kept x d
  Eigen::MatrixXd sp;    // kept x M
  double accept_rate = 0.0;
  double burn_accept_rate = 0.0;
  bool stuck = false;
  int mode_index = 0;
  double c_final = 0.0;
};

ChainOutcome run_one_chain(const MhTarget& target,
                           const std::vector<SeedMode>& seeds,
                           const Eigen::VectorXd& mode_weights,
                           const ChainConfig& cfg, int chain_id) {
  Rng rng(cfg.seed, static_cast<std::uint64_t>(chain_id));
  const int d = target.d;
  const int burn = cfg.effective_burn_in();
  const int kept_count = (cfg.n_iter - burn + cfg.thin - 1) / cfg.thin;

  ChainOutcome out;

  // Proposal-source mode: categorical draw with the softmax weights.
  {
    const double u = rng.uniform01();
    double acc = 0.0;
    out.mode_index = static_cast<int>(seeds.size()) - 1;
    for (std::size_t m = 0; m < seeds.size(); ++m) {
      acc += mode_weights[static_cast<Eigen::Index>(m)];
      if (u < acc) {
        out.mode_index = static_cast<int>(m);
        break;
      }
    }
  }
  const SeedMode& seed = seeds[static_cast<std::size_t>(out.mode_index)];

  // Proposal covariance c (num / d^2) inv_hess applied through its Cholesky
  // factor; only the scalar c adapts.
  const double base_scale =
      cfg.proposal_numerator / (static_cast<double>(d) * d);
  Eigen::LLT<Eigen::MatrixXd> llt((base_scale * (*seed.inv_hess)).eval());
  if (llt.info() != Eigen::Success)
    throw NumericalError("proposal covariance is not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();

  Eigen::VectorXd z = *seed.z;
  double lp = target.log_density(z);
  if (!std::isfinite(lp))
    throw NumericalError("chain seed has non-finite log density");

  out.kept.resize(kept_count, d);
  out.sp.resize(kept_count, target.M);
  Eigen::VectorXd xi(d), z_prop(d), sp_buf;
  int kept_row = 0;
  long accepted_burn = 0, accepted_post = 0;
  double log_c = std::log(cfg.c_init);

  for (int it = 0; it < cfg.n_iter; ++it) {
    for (int j = 0; j < d; ++j) xi[j] = rng.normal();
    const double step = std::exp(0.5 * log_c);
    z_prop = z;
    z_prop.noalias() += step * (L * xi);

    const double lp_prop = z_prop.allFinite()
                               ? target.log_density(z_prop)
                               : -std::numeric_limits<double>::infinity();
    const double log_alpha = lp_prop - lp;
    const double alpha =
        std::isfinite(lp_prop) ? std::min(1.0, std::exp(log_alpha)) : 0.0;
    const double u = rng.uniform01();
    if (std::isfinite(lp_prop) && std::log(u) < log_alpha) {
      z.swap(z_prop);
      lp = lp_prop;
      if (it < burn)
        ++accepted_burn;
      else
        ++accepted_post;
    }

    if (it < burn) {
      // Robbins-Monro on log c toward the target rate; frozen afterwards.
      const double gamma = std::pow(static_cast<double>(it + 1), -0.7);
      log_c += gamma * (alpha - cfg.target_accept);
    } else if ((it - burn) % cfg.thin == 0) {
      out.kept.row(kept_row) = z.transpose();
      if (target.M > 0) {
        target.sp_fill(z, sp_buf);
        out.sp.row(kept_row) = sp_buf.transpose();
      }
      ++kept_row;
    }
  }

  out.accept_rate = static_cast<double>(accepted_post) /
                    static_cast<double>(cfg.n_iter - burn);
  out.burn_accept_rate =
      burn > 0 ? static_cast<double>(accepted_burn) / burn : 0.0;
  out.stuck = burn > 0 && accepted_burn == 0;
  out.c_final = std::exp(log_c);
  return out;
}

PosteriorChains run_chains_core(const MhTarget& target,
                                const std::vector<SeedMode>& seeds,
                                const ChainConfig& cfg, int n_threads) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(seeds.size()));
  double max_lp = -std::numeric_limits<double>::infinity();
  for (const SeedMode& s : seeds) max_lp = std::max(max_lp, s.log_post);
  for (std::size_t m = 0; m < seeds.size(); ++m)
    w[static_cast<Eigen::Index>(m)] = std::exp(seeds[m].log_post - max_lp);
  w /= w.sum();

  std::vector<std::optional<ChainOutcome>> slots(
      static_cast<std::size_t>(cfg.n_chains));
  parallel_for(cfg.n_chains, n_threads, [&](int c) {
    slots[static_cast<std::size_t>(c)] =
        run_one_chain(target, seeds, w, cfg, c);
  });

  PosteriorChains out;
  const int kept = static_cast<int>(slots.front()->kept.rows());
  out.sp_draws.resize(static_cast<Eigen::Index>(kept) * cfg.n_chains,
                      target.M);
  for (int c = 0; c < cfg.n_chains; ++c) {
    ChainOutcome& o = *slots[static_cast<std::size_t>(c)];
    out.sp_draws.middleRows(static_cast<Eigen::Index>(c) * kept, kept) = o.sp;
    out.draws.push_back(std::move(o.kept));
    out.accept_rates.push_back(o.accept_rate);
    out.burn_in_accept_rates.push_back(o.burn_accept_rate);
    out.stuck.push_back(o.stuck ? 1 : 0);
    out.mode_index.push_back(o.mode_index);
    out.c_final.push_back(o.c_final);
  }
  return out;
}

}  // namespace

void PriorSpec::validate() const {
  if (!(sd_warp > 0.0) || !(sd_heights > 0.0) || !(sd_log_sigma > 0.0))
    throw ConfigError("prior standard deviations must be positive");
}

void ChainConfig::validate() const {
  if (n_chains < 1) throw ConfigError("n_chains must be >= 1");
  if (n_iter < 2) throw ConfigError("n_iter must be >= 2");
  if (effective_burn_in() < 0 || effective_burn_in() >= n_iter)
    throw ConfigError("burn_in must lie in [0, n_iter)");
  if (thin < 1) throw ConfigError("thin must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw ConfigError("target_accept must lie in (0, 1)");
  if (!(c_init > 0.0)) throw ConfigError("c_init must be positive");
  if (!(proposal_numerator > 0.0))
    throw ConfigError("proposal_numerator must be positive");
}

double log_posterior(const ModelParams& params, const TemplateSpec& spec,
                     const Dataset& data, const PriorSpec& prior) {
  const ModelWorkspace ws(data, spec, params.p());
  return log_posterior_on(ws, params, prior);
}

double log_posterior_on(const ModelWorkspace& ws, const ModelParams& params,
                        const PriorSpec& prior) {
  return -ws.neg_log_lik(params) + log_prior(params, prior);
}

std::vector<Mode> find_modes(const Dataset& data, const TemplateSpec& spec,
                             const FitConfig& cfg, const PriorSpec& prior,
                             int n_probes) {
  const ModelWorkspace ws(data, spec, cfg.p);
  return find_modes_on(ws, cfg, prior, n_probes);
}

std::vector<Mode> find_modes_on(const ModelWorkspace& ws, const FitConfig& cfg,
                                const PriorSpec& prior, int n_probes) {
  cfg.validate();
  prior.validate();
  if (n_probes < 1) throw ConfigError("n_probes must be >= 1");
  if (ws.p() != cfg.p || ws.M() != cfg.M)
    throw ConfigError("fit config (p, M) disagrees with the workspace");

  const SignSet sign = cfg.sign;
  const ObjectiveGradFn neg_post = [&ws, &prior, sign](
                                       const Eigen::VectorXd& z,
                                       Eigen::VectorXd& grad) {
    const ModelParams params = ws.unpack_full(z, sign);
    grad = ws.loss_grad(params);
    const int M = params.M(), p = params.p();
    const double sdh2 = prior.sd_heights * prior.sd_heights;
    grad[0] += params.heights.lambda0 / sdh2;
    grad.segment(1, M + 1) += params.heights.l / sdh2;
    grad.segment(M + 2, p) += params.y_warp / (prior.sd_warp * prior.sd_warp);
    grad[M + 2 + p] +=
        params.log_sigma / (prior.sd_log_sigma * prior.sd_log_sigma);
    return ws.neg_log_lik(params) - log_prior(params, prior);
  };

  const Eigen::VectorXd& y_obs = ws.data().y_obs;
  const double lo = y_obs.minCoeff(), hi = y_obs.maxCoeff();
  const double range = hi > lo ? hi - lo : 1.0;
  const double mean = y_obs.mean();
  const double sd0 =
      std::max(std::sqrt((y_obs.array() - mean).square().sum() /
                         std::max(1, ws.data().n() - 1)),
               1e-3);

  BfgsOptions opts;
  opts.max_iter = cfg.max_iter;
  opts.grad_tol = cfg.grad_tol;

  std::vector<std::optional<BfgsResult>> slots(
      static_cast<std::size_t>(n_probes));
  parallel_for(n_probes, cfg.n_threads, [&](int k) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(k));
    Eigen::VectorXd z(ws.d_full());
    z[0] = sign == SignSet::Plus ? lo : hi;
    const double l0 = std::log(range / (cfg.M + 1));
    for (int m = 0; m <= cfg.M; ++m) z[1 + m] = l0;
    for (int j = 0; j < cfg.p; ++j)
      z[cfg.M + 2 + j] = cfg.start_dispersion * rng.normal();
    z[ws.d_full() - 1] = std::log(sd0);
    slots[static_cast<std::size_t>(k)] = bfgs_minimize(neg_post, z, opts);
  });

  std::vector<Mode> modes;
  std::ostringstream diag;
  for (int k = 0; k < n_probes; ++k) {
    const BfgsResult& r = *slots[static_cast<std::size_t>(k)];
    diag << " [" << k << "] f=" << r.f
         << (r.converged ? " converged" : " not converged");
    if (!r.converged || !std::isfinite(r.f)) continue;

    bool merged = false;
    for (Mode& m : modes) {
      if ((pack_full(m.params) - r.z).norm() < 1e-3) {
        if (-r.f > m.log_post) {
          m.params = ws.unpack_full(r.z, sign);
          m.log_post = -r.f;
        }
        merged = true;
        break;
      }
    }
    if (!merged)
      modes.push_back(Mode{ws.unpack_full(r.z, sign), -r.f, Eigen::MatrixXd()});
  }
  if (modes.empty())
    throw OptimFailure("no posterior probe converged:" + diag.str());

  std::sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) {
    return a.log_post > b.log_post;
  });

  const ObjectiveFn neg_post_value = [&ws, &prior,
                                      sign](const Eigen::VectorXd& z) {
    const ModelParams params = ws.unpack_full(z, sign);
    return ws.neg_log_lik(params) - log_prior(params, prior);
  };
  for (Mode& m : modes)
    m.inv_hess =
        regularized_inverse(fd_hessian(neg_post_value, pack_full(m.params)));
  return modes;
}

std::vector<TargetMode> find_modes_target(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>&
        log_target_grad,
    const Eigen::VectorXd& z0, const FitConfig& cfg, int n_probes) {
  if (cfg.max_iter < 1) throw ConfigError("max_iter must be >= 1");
  if (!(cfg.grad_tol > 0.0)) throw ConfigError("grad_tol must be positive");
  if (!(cfg.start_dispersion > 0.0))
    throw ConfigError("start_dispersion must be positive");
  if (n_probes < 1) throw ConfigError("n_probes must be >= 1");
  if (z0.size() < 1) throw ConfigError("z0 must be non-empty");

  const ObjectiveGradFn neg = [&log_target_grad](const Eigen::VectorXd& z,
                                                 Eigen::VectorXd& grad) {
    const double v = log_target_grad(z, grad);
    grad = -grad;
    return -v;
  };

  BfgsOptions opts;
  opts.max_iter = cfg.max_iter;
  opts.grad_tol = cfg.grad_tol;

  std::vector<std::optional<BfgsResult>> slots(
      static_cast<std::size_t>(n_probes));
  parallel_for(n_probes, cfg.n_threads, [&](int k) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(k));
    Eigen::VectorXd z = z0;
    for (Eigen::Index i = 0; i < z.size(); ++i)
      z[i] += cfg.start_dispersion * rng.normal();
    slots[static_cast<std::size_t>(k)] = bfgs_minimize(neg, z, opts);
  });

  std::vector<TargetMode> modes;
  std::ostringstream diag;
  for (int k = 0; k < n_probes; ++k) {
    const BfgsResult& r = *slots[static_cast<std::size_t>(k)];
    diag << " [" << k << "] f=" << r.f
         << (r.converged ? " converged" : " not converged");
    if (!r.converged || !std::isfinite(r.f)) continue;

    bool merged = false;
    for (TargetMode& m : modes) {
      if ((m.z - r.z).norm() < 1e-3) {
        if (-r.f > m.log_post) {
          m.z = r.z;
          m.log_post = -r.f;
        }
        merged = true;
        break;
      }
    }
    if (!merged) modes.push_back(TargetMode{r.z, -r.f, Eigen::MatrixXd()});
  }
  if (modes.empty())
    throw OptimFailure("no target probe converged:" + diag.str());

  std::sort(modes.begin(), modes.end(),
            [](const TargetMode& a, const TargetMode& b) {
              return a.log_post > b.log_post;
            });

  const ObjectiveFn neg_value = [&log_target_grad](const Eigen::VectorXd& z) {
    Eigen::VectorXd g;
    return -log_target_grad(z, g);
  };
  for (TargetMode& m : modes)
    m.inv_hess = regularized_inverse(fd_hessian(neg_value, m.z));
  return modes;
}

PosteriorChains run_chains(const Dataset& data, const TemplateSpec& spec,
                           const std::vector<Mode>& modes,
                           const ChainConfig& cfg, const PriorSpec& prior) {
  if (modes.empty())
    throw ConfigError("run_chains requires at least one mode");
  const ModelWorkspace ws(data, spec, modes.front().params.p());
  return run_chains_on(ws, modes, cfg, prior);
}

PosteriorChains run_chains_on(const ModelWorkspace& ws,
                              const std::vector<Mode>& modes,
                              const ChainConfig& cfg, const PriorSpec& prior) {
  cfg.validate();
  prior.validate();
  if (modes.empty())
    throw ConfigError("run_chains requires at least one mode");

  const SignSet sign = modes.front().params.heights.sign;
  MhTarget target;
  target.d = ws.d_full();
  target.M = ws.M();
  target.log_density = [&ws, &prior, sign](const Eigen::VectorXd& z) {
    return log_posterior_on(ws, ws.unpack_full(z, sign), prior);
  };
  target.sp_fill = [&ws, sign](const Eigen::VectorXd& z,
                               Eigen::VectorXd& sp) {
    const ModelParams params = ws.unpack_full(z, sign);
    const Eigen::VectorXd internal = stationary_points(params, ws.spec());
    sp.resize(internal.size());
    for (Eigen::Index k = 0; k < internal.size(); ++k)
      sp[k] = ws.data().affine.to_user(internal[k]);
  };

  std::vector<Eigen::VectorXd> zs;
  zs.reserve(modes.size());
  for (const Mode& m : modes) zs.push_back(pack_full(m.params));
  std::vector<SeedMode> seeds;
  seeds.reserve(modes.size());
  for (std::size_t i = 0; i < modes.size(); ++i)
    seeds.push_back(SeedMode{&zs[i], modes[i].log_post, &modes[i].inv_hess});

  PosteriorChains out = run_chains_core(target, seeds, cfg, cfg.n_threads);
  out.modes = modes;

  // Phi ordering is a hard guarantee: every pooled row strictly ascends.
  for (Eigen::Index r = 0; r < out.sp_draws.rows(); ++r)
    for (Eigen::Index k = 1; k < out.sp_draws.cols(); ++k)
      if (!(out.sp_draws(r, k) > out.sp_draws(r, k - 1)))
        throw NumericalError("posterior stationary points lost ordering");
  return out;
}

PosteriorChains run_chains_target(
    const std::function<double(const Eigen::VectorXd&)>& log_target,
    const std::vector<TargetMode>& modes, const ChainConfig& cfg) {
  cfg.validate();
  if (!log_target) throw ConfigError("log_target must be callable");
  if (modes.empty())
    throw ConfigError("run_chains_target requires at least one mode");

  MhTarget target;
  target.d = static_cast<int>(modes.front().z.size());
  target.M = 0;
  target.log_density = log_target;

  std::vector<SeedMode> seeds;
  seeds.reserve(modes.size());
  for (const TargetMode& m : modes)
    seeds.push_back(SeedMode{&m.z, m.log_post, &m.inv_hess});
  return run_chains_core(target, seeds, cfg, cfg.n_threads);
}

std::pair<double, double> hpd_interval(const Eigen::VectorXd& samples,
                                       double level) {
  if (!(level > 0.0 && level < 1.0))
    throw ConfigError("HPD level must lie in (0, 1)");
  const Eigen::Index n = samples.size();
  if (n < 2) throw NumericalError("HPD interval needs at least two samples");
  if (!samples.allFinite())
    throw NumericalError("HPD samples must be finite");

  std::vector<double> s(samples.data(), samples.data() + n);
  std::sort(s.begin(), s.end());
  // ceil(level * n), with a dust guard so exact products stay exact.
  const auto m = static_cast<Eigen::Index>(
      std::ceil(level * static_cast<double>(n) - 1e-12));
  const Eigen::Index window = std::min(n, std::max<Eigen::Index>(m, 2));

  Eigen::Index best = 0;
  double best_width = s[static_cast<std::size_t>(window - 1)] - s[0];
  for (Eigen::Index i = 1; i + window <= n; ++i) {
    const double width = s[static_cast<std::size_t>(i + window - 1)] -
                         s[static_cast<std::size_t>(i)];
    if (width < best_width) {  // strict: ties keep the smallest low endpoint
      best_width = width;
      best = i;
    }
  }
  return {s[static_cast<std::size_t>(best)],
          s[static_cast<std::size_t>(best + window - 1)]};
}

std::vector<std::pair<double, double>> bonferroni_joint(
    const Eigen::MatrixXd& sp_draws, double level, int M) {
  if (M < 1) throw ConfigError("M must be >= 1");
  if (sp_draws.cols() != M)
    throw ConfigError("sp_draws column count must equal M");
  const double adjusted = 1.0 - (1.0 - level) / M;
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(M));
  for (int k = 0; k < M; ++k)
    out.push_back(hpd_interval(sp_draws.col(k), adjusted));
  return out;
}

ChainDiagnostics chain_diagnostics(const PosteriorChains& chains) {
  const int n_chains = chains.n_chains();
  if (n_chains == 0)
    throw ConfigError("diagnostics require at least one chain");
  const int kept = chains.kept_per_chain();

  // Stationary-point coordinates when available, else raw draw coordinates.
  Eigen::MatrixXd pooled;
  if (chains.sp_draws.cols() > 0) {
    pooled = chains.sp_draws;
  } else {
    const Eigen::Index d = chains.draws.front().cols();
    pooled.resize(static_cast<Eigen::Index>(kept) * n_chains, d);
    for (int c = 0; c < n_chains; ++c)
      pooled.middleRows(static_cast<Eigen::Index>(c) * kept, kept) =
          chains.draws[static_cast<std::size_t>(c)];
  }
  const Eigen::Index C = pooled.cols();

  ChainDiagnostics d;
  d.accept_rates = chains.accept_rates;
  d.stuck = chains.stuck;
  d.sp_mean.resize(C);
  d.sp_sd.resize(C);
  d.dispersion_ratio.resize(C);
  d.zero_variance.assign(static_cast<std::size_t>(C), 0);

  const Eigen::Index half = kept / 2;
  for (Eigen::Index k = 0; k < C; ++k) {
    const auto col = pooled.col(k);
    const double mean = col.mean();
    d.sp_mean[k] = mean;
    d.sp_sd[k] = std::sqrt((col.array() - mean).square().sum() /
                           std::max<Eigen::Index>(1, col.size() - 1));

    if (half < 2) {
      d.dispersion_ratio[k] = std::numeric_limits<double>::quiet_NaN();
      d.zero_variance[static_cast<std::size_t>(k)] = 1;
      continue;
    }
    // Split each chain in half and compare the spread of half-means with the
    // average within-half variance (squared scale-reduction form).
    std::vector<double> half_means, half_vars;
    for (int c = 0; c < n_chains; ++c) {
      const Eigen::Index base = static_cast<Eigen::Index>(c) * kept;
      for (int h = 0; h < 2; ++h) {
        const auto seg = col.segment(base + h * half, half);
        const double hm = seg.mean();
        half_means.push_back(hm);
        half_vars.push_back((seg.array() - hm).square().sum() /
                            static_cast<double>(half - 1));
      }
    }
    const auto m = static_cast<double>(half_means.size());
    double gm = 0.0;
    for (double v : half_means) gm += v;
    gm /= m;
    double between = 0.0;
    for (double v : half_means) between += (v - gm) * (v - gm);
    between *= static_cast<double>(half) / (m - 1.0);
    double within = 0.0;
    for (double v : half_vars) within += v;
    within /= m;

    if (!(within > 0.0)) {
      d.dispersion_ratio[k] = std::numeric_limits<double>::quiet_NaN();
      d.zero_variance[static_cast<std::size_t>(k)] = 1;
      continue;
    }
    const double vhat =
        (static_cast<double>(half - 1) / static_cast<double>(half)) * within +
        between / static_cast<double>(half);
    d.dispersion_ratio[k] = vhat / within;
  }
  return d;
}

BootstrapResult wlb_draws(const FitResult& fit, const Dataset& data,
                          const TemplateSpec& spec, const FitConfig& cfg,
                          int B) {
  if (B < 1) throw ConfigError("replicate count B must be >= 1");
  cfg.validate();
  const Eigen::VectorXd z_warm = pack_mean(fit.best);
  const int n = data.n();
  const int M = cfg.M;

  struct RepOutcome {
    Eigen::VectorXd sp;
    Eigen::VectorXd z;
  };
  std::vector<std::optional<RepOutcome>> slots(static_cast<std::size_t>(B));

  parallel_for(B, cfg.n_threads, [&](int b) {
    Rng rng(cfg.seed, (2ull << 32) + static_cast<std::uint64_t>(b));
    Eigen::VectorXd wts(n);
    for (int i = 0; i < n; ++i) wts[i] = rng.exponential();

    RepOutcome out;
    try {
      const ModelWorkspace ws(data, spec, cfg.p, wts);
      BfgsOptions opts;
      opts.max_iter = cfg.max_iter;
      opts.grad_tol = cfg.grad_tol;
      const SignSet sign = cfg.sign;
      const ObjectiveGradFn obj = [&ws, sign](const Eigen::VectorXd& z,
                                              Eigen::VectorXd& grad) {
        const ModelParams params = ws.unpack_mean(z, sign);
        grad = ws.sse_grad(params);
        return ws.sse(params);
      };

      std::vector<std::pair<double, Eigen::VectorXd>> finals;
      const BfgsResult warm = bfgs_minimize(obj, z_warm, opts);
      if (warm.converged && std::isfinite(warm.f))
        finals.emplace_back(warm.f, warm.z);

      const std::uint64_t inner_seed =
          Rng::derive(cfg.seed, 0x776c62ull + static_cast<std::uint64_t>(b));
      const double ylo = data.y_obs.minCoeff(), yhi = data.y_obs.maxCoeff();
      const double range = yhi > ylo ? yhi - ylo : 1.0;
      for (int k = 0; k < 3; ++k) {
        Rng srng(inner_seed, static_cast<std::uint64_t>(k));
        Eigen::VectorXd z(ws.d_mean());
        z[0] = sign == SignSet::Plus ? ylo : yhi;
        const double l0 = std::log(range / (cfg.M + 1));
        for (int m = 0; m <= cfg.M; ++m) z[1 + m] = l0;
        for (int j = 0; j < cfg.p; ++j)
          z[cfg.M + 2 + j] = cfg.start_dispersion * srng.normal();
        const BfgsResult r = bfgs_minimize(obj, z, opts);
        if (r.converged && std::isfinite(r.f)) finals.emplace_back(r.f, r.z);
      }
      if (finals.empty()) throw OptimFailure("no weighted refit converged");
      const auto it = std::min_element(
          finals.begin(), finals.end(),
          [](const auto& a, const auto& b) { return a.first < b.first; });
      const ModelParams best = ws.unpack_mean(it->second, sign);
      const Eigen::VectorXd sp_internal = stationary_points(best, spec);
      out.sp.resize(sp_internal.size());
      for (Eigen::Index k = 0; k < sp_internal.size(); ++k)
        out.sp[k] = data.affine.to_user(sp_internal[k]);
      out.z = it->second;
    } catch (const NumericalError&) {
      out.sp.resize(0);
    }
    slots[static_cast<std::size_t>(b)] = std::move(out);
  });

  BootstrapResult res;
  res.draws.resize(B, M);
  res.params.resize(B, z_warm.size());
  int kept_rows = 0;
  for (int b = 0; b < B; ++b) {
    const RepOutcome& out = *slots[static_cast<std::size_t>(b)];
    if (out.sp.size() != M) {
      ++res.n_failed;
      continue;
    }
    res.draws.row(kept_rows) = out.sp.transpose();
    res.params.row(kept_rows) = out.z.transpose();
    ++kept_rows;
  }
  res.draws.conservativeResize(kept_rows, M);
  res.params.conservativeResize(kept_rows, z_warm.size());
  return res;
}

}  // namespace spcr
