#include "spcr/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>

#include <Eigen/Dense>

#include "spcr/errors.hpp"
#include "spcr/parallel.hpp"
#include "spcr/rng.hpp"

namespace spcr {

namespace {

// Floor on the profiled variance keeps log_sigma finite on zero-noise data.
constexpr double kSigma2Floor = 1e-30;

double profiled_log_sigma(double sse_value, int n) {
  const double s2 = std::max(sse_value / n, kSigma2Floor);
  return 0.5 * std::log(s2);
}

ObjectiveGradFn sse_objective(const ModelWorkspace& ws, SignSet sign) {
  return [&ws, sign](const Eigen::VectorXd& z, Eigen::VectorXd& grad) {
    const ModelParams params = ws.unpack_mean(z, sign);
    grad = ws.sse_grad(params);
    return ws.sse(params);
  };
}

Eigen::VectorXd start_point(const ModelWorkspace& ws, const FitConfig& cfg,
                            Rng& rng) {
  const Eigen::VectorXd& y_obs = ws.data().y_obs;
  const double lo = y_obs.minCoeff(), hi = y_obs.maxCoeff();
  const double range = hi > lo ? hi - lo : 1.0;

  Eigen::VectorXd z(ws.d_mean());
  z[0] = cfg.sign == SignSet::Plus ? lo : hi;
  const double l0 = std::log(range / (cfg.M + 1));
  for (int k = 0; k <= cfg.M; ++k) z[1 + k] = l0;
  for (int j = 0; j < cfg.p; ++j)
    z[cfg.M + 2 + j] = cfg.start_dispersion * rng.normal();
  return z;
}

StartRecord run_start(const ModelWorkspace& ws, const FitConfig& cfg,
                      const Eigen::VectorXd& z0) {
  BfgsOptions opts;
  opts.max_iter = cfg.max_iter;
  opts.grad_tol = cfg.grad_tol;
  const BfgsResult r = bfgs_minimize(sse_objective(ws, cfg.sign), z0, opts);
  const double ls = profiled_log_sigma(r.f, ws.data().n());
  StartRecord rec{ws.unpack_mean(r.z, cfg.sign, ls), r.f, r.converged,
                  r.iters};
  return rec;
}

FitResult assemble(const ModelWorkspace& ws, std::vector<StartRecord> starts) {
  int best = -1;
  for (int k = 0; k < static_cast<int>(starts.size()); ++k) {
    if (!starts[k].converged || !std::isfinite(starts[k].loss)) continue;
    if (best < 0 || starts[k].loss < starts[best].loss) best = k;
  }
  if (best < 0) {
    std::ostringstream msg;
    msg << "no start converged (" << starts.size() << " attempted):";
    for (std::size_t k = 0; k < starts.size(); ++k)
      msg << " [" << k << "] loss=" << starts[k].loss
          << (starts[k].converged ? " converged" : " not converged");
    throw OptimFailure(msg.str());
  }

  FitResult fit{starts[best].params, starts[best].loss, std::move(starts),
                Eigen::MatrixXd(),   Eigen::VectorXd(),  best};
  fit.hessian = hessian_at(fit.best, ws.spec(), ws.data());
  const Eigen::VectorXd sp_internal = stationary_points(fit.best, ws.spec());
  fit.stationary.resize(sp_internal.size());
  for (Eigen::Index k = 0; k < sp_internal.size(); ++k)
    fit.stationary[k] = ws.data().affine.to_user(sp_internal[k]);
  return fit;
}

}  // namespace

void FitConfig::validate() const {
  if (p < 1) throw ConfigError("basis dimension p must be >= 1");
  if (M < 0) throw ConfigError("stationary-point count M must be >= 0");
  if (n_starts < 1) throw ConfigError("n_starts must be >= 1");
  if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
  if (!(grad_tol > 0.0)) throw ConfigError("grad_tol must be positive");
  if (!(start_dispersion > 0.0))
    throw ConfigError("start_dispersion must be positive");
}

FitResult fit_mle(const Dataset& data, const TemplateSpec& spec,
                  const FitConfig& cfg) {
  cfg.validate();  // before the workspace, so bad p surfaces as ConfigError
  const ModelWorkspace ws(data, spec, cfg.p);
  return fit_mle_on(ws, cfg);
}

FitResult fit_mle_on(const ModelWorkspace& ws, const FitConfig& cfg) {
  cfg.validate();
  if (ws.p() != cfg.p || ws.M() != cfg.M)
    throw ConfigError("fit config (p, M) disagrees with the workspace");
  if (ws.data().n() <= ws.d_full())
    std::cerr << "warning: n = " << ws.data().n()
              << " does not exceed the parameter count " << ws.d_full()
              << "; the fit is weakly identified\n";

  std::vector<std::optional<StartRecord>> slots(cfg.n_starts);
  parallel_for(cfg.n_starts, cfg.n_threads, [&](int k) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(k));
    slots[k] = run_start(ws, cfg, start_point(ws, cfg, rng));
  });

  std::vector<StartRecord> starts;
  starts.reserve(slots.size());
  for (auto& s : slots) starts.push_back(std::move(*s));
  return assemble(ws, std::move(starts));
}

Eigen::MatrixXd hessian_at(const ModelParams& params, const TemplateSpec& spec,
                           const Dataset& data) {
  const ModelWorkspace ws(data, spec, params.p());
  const SignSet sign = params.heights.sign;
  ObjectiveFn f = [&ws, sign](const Eigen::VectorXd& z) {
    return ws.sse(ws.unpack_mean(z, sign));
  };
  return fd_hessian(f, pack_mean(params));
}

BootstrapResult residual_bootstrap(const FitResult& fit, const Dataset& data,
                                   const TemplateSpec& spec,
                                   const FitConfig& cfg, int B) {
  if (B < 1) throw ConfigError("bootstrap replicate count B must be >= 1");
  const ModelWorkspace ws(data, spec, cfg.p);

  Eigen::VectorXd fitted(data.n());
  ws.predict_all(fit.best, fitted);
  Eigen::VectorXd resid = data.y_obs - fitted;
  resid.array() -= resid.mean();

  const Eigen::VectorXd z_warm = pack_mean(fit.best);
  const int n = data.n();
  const int M = cfg.M;

  struct RepOutcome {
    Eigen::VectorXd sp;  // empty on failure
    Eigen::VectorXd z;   // packed mean coordinates of the winning refit
    bool warm_won = false;
  };
  std::vector<std::optional<RepOutcome>> slots(B);

  parallel_for(B, cfg.n_threads, [&](int b) {
    Rng rng(cfg.seed, (1ull << 32) + static_cast<std::uint64_t>(b));
    Eigen::VectorXd y_star(n);
    for (int i = 0; i < n; ++i)
      y_star[i] = fitted[i] + resid[static_cast<Eigen::Index>(
                                  rng.uniform_index(n))];

    RepOutcome out;
    try {
      Dataset d_star = data;
      d_star.y_obs = std::move(y_star);
      const ModelWorkspace ws_star(d_star, spec, cfg.p);

      FitConfig inner = cfg;
      inner.n_starts = 3;
      inner.seed = Rng::derive(cfg.seed, 0x626f6f74ull + b);

      // Warm start at the original optimum, then fresh starts.
      std::vector<StartRecord> starts;
      starts.push_back(run_start(ws_star, inner, z_warm));
      for (int k = 0; k < inner.n_starts; ++k) {
        Rng srng(inner.seed, static_cast<std::uint64_t>(k));
        starts.push_back(
            run_start(ws_star, inner, start_point(ws_star, inner, srng)));
      }
      int best = -1;
      for (int k = 0; k < static_cast<int>(starts.size()); ++k) {
        if (!starts[k].converged || !std::isfinite(starts[k].loss)) continue;
        if (best < 0 || starts[k].loss < starts[best].loss) best = k;
      }
      if (best < 0) throw OptimFailure("no bootstrap start converged");
      out.warm_won = best == 0;

      const Eigen::VectorXd sp_internal =
          stationary_points(starts[best].params, spec);
      out.sp.resize(sp_internal.size());
      for (Eigen::Index k = 0; k < sp_internal.size(); ++k)
        out.sp[k] = data.affine.to_user(sp_internal[k]);
      out.z = pack_mean(starts[best].params);
    } catch (const NumericalError&) {
      out.sp.resize(0);
    }
    slots[b] = std::move(out);
  });

  BootstrapResult res;
  res.draws.resize(B, M);
  res.params.resize(B, z_warm.size());
  int kept = 0;
  for (int b = 0; b < B; ++b) {
    const RepOutcome& out = *slots[b];
    if (out.sp.size() != M) {
      ++res.n_failed;
      continue;
    }
    res.draws.row(kept) = out.sp.transpose();
    res.params.row(kept) = out.z.transpose();
    ++kept;
    if (out.warm_won) ++res.warm_best_count;
  }
  res.draws.conservativeResize(kept, M);
  res.params.conservativeResize(kept, z_warm.size());
  return res;
}

}  // namespace spcr
