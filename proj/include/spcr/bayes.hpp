#ifndef SPCR_BAYES_HPP
#define SPCR_BAYES_HPP

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "spcr/estimate.hpp"
#include "spcr/model.hpp"

namespace spcr {

/// Independent zero-mean normal priors on the unconstrained coordinates.
struct PriorSpec {
  double sd_warp = 2.0;
  double sd_heights = 10.0;
  double sd_log_sigma = 3.0;

  void validate() const;  // throws ConfigError
};

struct ChainConfig {
  int n_chains = 4;
  int n_iter = 4000;
  int burn_in = -1;  // -1 = n_iter / 2
  int thin = 1;
  double target_accept = 0.23;
  double c_init = 1.0;
  double proposal_numerator = 2.4;  // from the c(2.4/d^2) H^{-1} scale
  std::uint64_t seed = 1;
  int n_threads = 0;

  int effective_burn_in() const { return burn_in < 0 ? n_iter / 2 : burn_in; }
  void validate() const;  // throws ConfigError
};

/// A posterior mode with its curvature summary.
struct Mode {
  ModelParams params;
  double log_post = 0.0;
  Eigen::MatrixXd inv_hess;  // regularized inverse of -d2 log_posterior
};

struct PosteriorChains {
  std::vector<Eigen::MatrixXd> draws;  // per chain: kept x d (unconstrained)
  Eigen::MatrixXd sp_draws;            // pooled kept draws of the stationary
                                       // points, user scale, M columns
  std::vector<double> accept_rates;    // post-burn-in, per chain
  std::vector<double> burn_in_accept_rates;
  std::vector<int> stuck;              // 1 = zero acceptances during burn-in
  std::vector<int> mode_index;         // proposal-source mode per chain
  std::vector<double> c_final;         // adapted scalar after burn-in
  std::vector<Mode> modes;

  int n_chains() const { return static_cast<int>(draws.size()); }
  int kept_per_chain() const {
    return draws.empty() ? 0 : static_cast<int>(draws.front().rows());
  }
};

double log_posterior(const ModelParams& params, const TemplateSpec& spec,
                     const Dataset& data, const PriorSpec& prior);

/// Workspace variant used in hot loops.
double log_posterior_on(const ModelWorkspace& ws, const ModelParams& params,
                        const PriorSpec& prior);

/// Posterior modes by multi-start maximization of log_posterior over the full
/// unconstrained coordinates. Probes follow the fit start recipe; log_sigma
/// starts at log sd(y_obs). Modes closer than 1e-3 in unconstrained distance
/// are merged (higher log posterior wins). Each mode carries the regularized
/// inverse Hessian of the negative log posterior (eigenvalues floored at
/// 1e-8 of the largest before inversion).
std::vector<Mode> find_modes(const Dataset& data, const TemplateSpec& spec,
                             const FitConfig& cfg, const PriorSpec& prior,
                             int n_probes);
std::vector<Mode> find_modes_on(const ModelWorkspace& ws, const FitConfig& cfg,
                                const PriorSpec& prior, int n_probes);

/// Mode-seeded random-walk Metropolis-Hastings. Each chain picks a proposal
/// mode with probability proportional to exp(log_post - max log_post), starts
/// there, and proposes with covariance c (num/d^2) inv_hess where c adapts
/// toward target_accept during burn-in (Robbins-Monro on log c, step k^-0.7)
/// and is frozen afterwards. d is the full unconstrained dimension.
PosteriorChains run_chains(const Dataset& data, const TemplateSpec& spec,
                           const std::vector<Mode>& modes,
                           const ChainConfig& cfg, const PriorSpec& prior);
PosteriorChains run_chains_on(const ModelWorkspace& ws,
                              const std::vector<Mode>& modes,
                              const ChainConfig& cfg, const PriorSpec& prior);

/// Seed for the generic-target sampler below.
struct TargetMode {
  Eigen::VectorXd z;
  double log_post = 0.0;
  Eigen::MatrixXd inv_hess;
};

/// Same Metropolis-Hastings kernel on an arbitrary log density; used to
/// validate the sampler against targets with known moments. The result has
/// draws and rates filled and no stationary-point columns (sp_draws is empty,
/// modes is empty).
PosteriorChains run_chains_target(
    const std::function<double(const Eigen::VectorXd&)>& log_target,
    const std::vector<TargetMode>& modes, const ChainConfig& cfg);

/// Same probe + merge engine as find_modes on an arbitrary smooth log density
/// with caller-supplied gradient (the callback returns the log density and
/// fills its gradient). Probes start at z0 plus a spherical normal cloud of
/// SD start_dispersion; merge radius and Hessian treatment match the
/// posterior path. Used to validate the engine on targets with known mode
/// structure.
std::vector<TargetMode> find_modes_target(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>&
        log_target_grad,
    const Eigen::VectorXd& z0, const FitConfig& cfg, int n_probes);

/// Shortest contiguous interval containing ceil(level * N) sorted samples.
/// Ties resolve to the smallest low endpoint.
std::pair<double, double> hpd_interval(const Eigen::VectorXd& samples,
                                       double level);

/// Per-coordinate HPD intervals at the Bonferroni-adjusted level
/// 1 - (1 - level) / M.
std::vector<std::pair<double, double>> bonferroni_joint(
    const Eigen::MatrixXd& sp_draws, double level, int M);

struct ChainDiagnostics {
  std::vector<double> accept_rates;  // per chain
  Eigen::VectorXd sp_mean;           // pooled, per coordinate
  Eigen::VectorXd sp_sd;
  Eigen::VectorXd dispersion_ratio;  // split-chain, per coordinate
  std::vector<int> zero_variance;    // per coordinate
  std::vector<int> stuck;            // copied from the run
};

/// Split-chain dispersion summary: each chain's kept draws are halved, and
/// the ratio is the pooled-variance estimate over the mean within-half
/// variance (the squared potential-scale-reduction form); near 1 when mixed.
/// Summaries cover the stationary-point coordinates, or the raw draw
/// coordinates for generic-target runs without stationary points.
ChainDiagnostics chain_diagnostics(const PosteriorChains& chains);

/// Weighted-likelihood bootstrap draws: per replicate, refit under Exp(1)
/// weights (warm start at fit.best plus 3 fresh starts) and record the
/// stationary points. Same result shape as residual_bootstrap.
BootstrapResult wlb_draws(const FitResult& fit, const Dataset& data,
                          const TemplateSpec& spec, const FitConfig& cfg,
                          int B);

}  // namespace spcr

#endif
