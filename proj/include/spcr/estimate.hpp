#ifndef SPCR_ESTIMATE_HPP
#define SPCR_ESTIMATE_HPP

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "spcr/model.hpp"
#include "spcr/optim.hpp"

namespace spcr {

struct FitConfig {
  int p = 5;
  int M = 1;
  SignSet sign = SignSet::Plus;
  int n_starts = 20;
  int max_iter = 500;
  double grad_tol = 1e-6;
  std::uint64_t seed = 1;
  double start_dispersion = 1.0;
  int n_threads = 0;  // 0 = hardware concurrency

  void validate() const;  // throws ConfigError
};

struct StartRecord {
  ModelParams params;
  double loss = 0.0;
  bool converged = false;
  int iters = 0;
};

struct FitResult {
  ModelParams best;
  double loss = 0.0;  // residual sum of squares at best
  std::vector<StartRecord> starts;
  Eigen::MatrixXd hessian;       // of the sse objective, mean coordinates
  Eigen::VectorXd stationary;    // user scale, ascending, length M
  int best_index = -1;
};

/// Multi-start maximum likelihood. Minimizes the residual sum of squares over
/// the mean coordinates [lambda0, l, y_warp]; sigma is profiled analytically
/// as sse/n afterwards (the likelihood is separable in sigma). Start k draws
/// from its own (seed, k) stream, and the winner is the converged start with
/// the lowest loss (lowest index on ties), so the result is deterministic
/// regardless of thread count. Throws OptimFailure when no start converges.
FitResult fit_mle(const Dataset& data, const TemplateSpec& spec,
                  const FitConfig& cfg);

/// Same, reusing a prebuilt workspace (the workspace must wrap `data`).
FitResult fit_mle_on(const ModelWorkspace& ws, const FitConfig& cfg);

/// Central finite-difference Hessian of the sse objective at params,
/// symmetrized. Step h_i = 1e-5 (1 + |z_i|).
Eigen::MatrixXd hessian_at(const ModelParams& params, const TemplateSpec& spec,
                           const Dataset& data);

struct BootstrapResult {
  Eigen::MatrixXd draws;    // B x M stationary-point draws, user scale
  Eigen::MatrixXd params;   // matching rows of mean coordinates (for bands)
  int n_failed = 0;         // replicates dropped after refit failure
  int warm_best_count = 0;  // replicates where the warm start won
};

/// Residual bootstrap: resample centered residuals, rebuild y*, refit with a
/// warm start at fit.best plus 3 fresh starts, record the stationary points.
/// Failed replicates are dropped and counted, never fatal.
BootstrapResult residual_bootstrap(const FitResult& fit, const Dataset& data,
                                   const TemplateSpec& spec,
                                   const FitConfig& cfg, int B);

}  // namespace spcr

#endif
