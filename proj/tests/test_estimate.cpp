#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "spcr/errors.hpp"
#include "spcr/estimate.hpp"
#include "spcr/rng.hpp"

using namespace spcr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ModelParams random_params(Rng& rng, int M, int p, SignSet sign,
                          double y_scale = 0.6) {
  UnconstrainedHeights u;
  u.lambda0 = rng.normal();
  u.l.resize(M + 1);
  for (int k = 0; k <= M; ++k) u.l[k] = 0.5 * rng.normal();
  u.sign = sign;
  VectorXd y(p);
  for (int j = 0; j < p; ++j) y[j] = y_scale * rng.normal();
  return ModelParams(std::move(u), std::move(y), 0.0);
}

Dataset model_dataset(Rng& rng, const ModelParams& params,
                      const TemplateSpec& spec, int n, double noise_sd) {
  VectorXd x(n), y(n);
  for (int i = 0; i < n; ++i) x[i] = rng.uniform01();
  Dataset shape = Dataset::from_xy(x, VectorXd::Zero(n));
  for (int i = 0; i < n; ++i)
    y[i] = predict(params, spec, shape.x[i]) + noise_sd * rng.normal();
  return Dataset::from_xy(x, y);
}

}  // namespace

TEST_CASE("bfgs: rosenbrock valley") {
  const auto fg = [](const VectorXd& z, VectorXd& g) {
    const double a = 1.0 - z[0];
    const double b = z[1] - z[0] * z[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * z[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  VectorXd z0(2);
  z0 << -1.2, 1.0;
  const BfgsResult r = bfgs_minimize(fg, z0);
  CHECK(r.converged);
  CHECK(std::abs(r.z[0] - 1.0) <= 1e-6);
  CHECK(std::abs(r.z[1] - 1.0) <= 1e-6);
  CHECK(r.f <= 1e-12);
}

TEST_CASE("bfgs: deterministic and monotone on a quadratic") {
  MatrixXd A(3, 3);
  A << 4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0;
  VectorXd b(3);
  b << 1.0, -2.0, 0.5;
  const auto fg = [&](const VectorXd& z, VectorXd& g) {
    g = A * z - b;
    return 0.5 * z.dot(A * z) - b.dot(z);
  };
  VectorXd z0(3);
  z0 << 5.0, -3.0, 2.0;
  const BfgsResult r1 = bfgs_minimize(fg, z0);
  const BfgsResult r2 = bfgs_minimize(fg, z0);
  CHECK(r1.converged);
  CHECK((r1.z - r2.z).cwiseAbs().maxCoeff() == 0.0);
  const VectorXd z_star = A.ldlt().solve(b);
  CHECK((r1.z - z_star).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("fd_hessian: recovers the matrix of a quadratic") {
  MatrixXd A(4, 4);
  A.setZero();
  A << 3.0, 0.7, -0.2, 0.0, 0.7, 2.0, 0.4, 0.1, -0.2, 0.4, 1.5, -0.3, 0.0,
      0.1, -0.3, 2.5;
  const auto f = [&](const VectorXd& z) { return 0.5 * z.dot(A * z); };

  // Where the objective values are tiny the quadratic FD is exact to
  // roundoff; this is the clean statement of "recovers A to 1e-6".
  const MatrixXd H0 = fd_hessian(f, VectorXd::Zero(4));
  CHECK((H0 - A).cwiseAbs().maxCoeff() <= 1e-6);

  // At a generic point |f| ~ 6, so subtractive cancellation at step 1e-5
  // floors the error near 5e-6; the bound below is that floor with margin.
  VectorXd z(4);
  z << 0.3, -1.0, 2.0, 0.0;
  const MatrixXd H = fd_hessian(f, z);
  CHECK((H - A).cwiseAbs().maxCoeff() <= 2e-5);
  CHECK((H - H.transpose()).cwiseAbs().maxCoeff() == 0.0);

  const auto bad = [](const VectorXd&) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(fd_hessian(bad, z), NumericalError);
}

TEST_CASE("fit_mle: drives the loss to zero on noiseless data") {
  // Moderate warp: for strong warps the global least-squares basin becomes
  // narrow enough that generic multistart misses it (a known hazard of
  // warped-template fitting; the posterior mode machinery covers that case).
  Rng rng(41, 0);
  const TemplateSpec spec = TemplateSpec::uniform_nodes(1);
  const ModelParams truth = random_params(rng, 1, 4, SignSet::Plus, 0.25);
  const Dataset data = model_dataset(rng, truth, spec, 200, 0.0);

  FitConfig cfg;
  cfg.p = 4;
  cfg.M = 1;
  cfg.sign = SignSet::Plus;
  cfg.n_starts = 20;
  cfg.seed = 7;
  const FitResult fit = fit_mle(data, spec, cfg);

  CHECK(fit.loss <= 1e-8);
  REQUIRE(fit.best_index >= 0);
  REQUIRE(fit.best_index < static_cast<int>(fit.starts.size()));
  CHECK(fit.starts[fit.best_index].converged);
  CHECK(fit.starts[fit.best_index].loss == fit.loss);

  // The recovered curve has the right turning point.
  const VectorXd sp_true = stationary_points(truth, spec);
  const double sp_true_user = data.affine.to_user(sp_true[0]);
  REQUIRE(fit.stationary.size() == 1);
  CHECK(std::abs(fit.stationary[0] - sp_true_user) <= 0.05);

  // First-order conditions at the winner.
  const ModelWorkspace ws(data, spec, 4);
  CHECK(ws.sse_grad(fit.best).lpNorm<Eigen::Infinity>() <= 1e-4);
}

TEST_CASE("fit_mle: bit-for-bit deterministic") {
  Rng rng(42, 0);
  const TemplateSpec spec = TemplateSpec::uniform_nodes(1);
  const ModelParams truth = random_params(rng, 1, 3, SignSet::Plus);
  const Dataset data = model_dataset(rng, truth, spec, 80, 0.2);

  FitConfig cfg;
  cfg.p = 3;
  cfg.M = 1;
  cfg.n_starts = 3;
  cfg.seed = 11;
  const FitResult a = fit_mle(data, spec, cfg);
  const FitResult b = fit_mle(data, spec, cfg);
  CHECK(a.loss == b.loss);
  CHECK(a.best_index == b.best_index);
  CHECK((pack_full(a.best) - pack_full(b.best)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.stationary - b.stationary).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit_mle: locates the turning point of a known wave") {
  // One interior maximum near 0.39973 for this mean on [0,1].
  Rng rng(43, 0);
  const int n = 300;
  VectorXd x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = rng.uniform01();
    const double m = 1.0 + std::sin(2.0 * x[i]) + std::cos(3.0 * x[i]) +
                     3.0 * x[i] - 2.0 * x[i] * x[i];
    y[i] = m + 0.25 * rng.normal();
  }
  const Dataset data = Dataset::from_xy(x, y);
  const TemplateSpec spec = TemplateSpec::uniform_nodes(1);

  FitConfig cfg;
  cfg.p = 7;
  cfg.M = 1;
  cfg.sign = SignSet::Plus;
  cfg.seed = 5;
  const FitResult fit = fit_mle(data, spec, cfg);
  CHECK(std::abs(fit.stationary[0] - 0.39973) <= 0.05);
}

TEST_CASE("fit_mle: config and data validation") {
  Rng rng(44, 0);
  const TemplateSpec spec = TemplateSpec::uniform_nodes(1);
  const ModelParams truth = random_params(rng, 1, 3, SignSet::Plus);
  const Dataset data = model_dataset(rng, truth, spec, 40, 0.1);

  FitConfig cfg;
  cfg.p = 3;
  cfg.M = 1;

  FitConfig bad = cfg;
  bad.p = 0;
  CHECK_THROWS_AS(fit_mle(data, spec, bad), ConfigError);
  bad = cfg;
  bad.n_starts = 0;
  CHECK_THROWS_AS(fit_mle(data, spec, bad), ConfigError);

  // n equal to the parameter count is weakly identified: warned, not fatal.
  const Dataset tiny = model_dataset(rng, truth, spec, 7, 0.1);
  CHECK_NOTHROW(fit_mle(tiny, spec, cfg));

  // Starved iteration budget: no start converges.
  FitConfig starved = cfg;
  starved.max_iter = 1;
  starved.n_starts = 2;
  CHECK_THROWS_AS(fit_mle(data, spec, starved), OptimFailure);
}

TEST_CASE("hessian_at: symmetric and near-PSD at the optimum") {
  Rng rng(45, 0);
  const TemplateSpec spec = TemplateSpec::uniform_nodes(1);
  const ModelParams truth = random_params(rng, 1, 3, SignSet::Plus);
  const Dataset data = model_dataset(rng, truth, spec, 120, 0.15);

  FitConfig cfg;
  cfg.p = 3;
  cfg.M = 1;
  cfg.seed = 3;
  const FitResult fit = fit_mle(data, spec, cfg);
  const MatrixXd H = hessian_at(fit.best, spec, data);

  REQUIRE(H.rows() == 6);
  CHECK((H - H.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(H);
  const double scale = H.cwiseAbs().maxCoeff();
  CHECK(eig.eigenvalues().minCoeff() > -1e-4 * scale);
  CHECK((H - fit.hessian).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("residual_bootstrap: degenerate on noiseless data") {
  Rng rng(46, 0);
  const TemplateSpec spec = TemplateSpec::uniform_nodes(1);
  const ModelParams truth = random_params(rng, 1, 3, SignSet::Plus);
  const Dataset data = model_dataset(rng, truth, spec, 100, 0.0);

  FitConfig cfg;
  cfg.p = 3;
  cfg.M = 1;
  cfg.seed = 9;
  const FitResult fit = fit_mle(data, spec, cfg);
  REQUIRE(fit.loss <= 1e-8);

  const BootstrapResult boot = residual_bootstrap(fit, data, spec, cfg, 30);
  CHECK(boot.n_failed == 0);
  REQUIRE(boot.draws.rows() == 30);
  REQUIRE(boot.draws.cols() == 1);
  REQUIRE(boot.params.rows() == 30);
  REQUIRE(boot.params.cols() == 6);
  for (int b = 0; b < 30; ++b)
    CHECK(std::abs(boot.draws(b, 0) - fit.stationary[0]) <= 1e-6);
  CHECK(boot.warm_best_count >= 28);
}

TEST_CASE("residual_bootstrap: draws vary and stay ordered under noise") {
  Rng rng(47, 0);
  const TemplateSpec spec = TemplateSpec::uniform_nodes(2);
  const ModelParams truth = random_params(rng, 2, 4, SignSet::Plus);
  const Dataset data = model_dataset(rng, truth, spec, 150, 0.2);

  FitConfig cfg;
  cfg.p = 4;
  cfg.M = 2;
  cfg.seed = 13;
  const FitResult fit = fit_mle(data, spec, cfg);
  const BootstrapResult boot = residual_bootstrap(fit, data, spec, cfg, 40);

  REQUIRE(boot.draws.rows() + boot.n_failed == 40);
  REQUIRE(boot.draws.rows() >= 30);
  for (int b = 0; b < boot.draws.rows(); ++b)
    CHECK(boot.draws(b, 0) < boot.draws(b, 1));

  // Not all draws identical: the resampled noise must move the estimate.
  const double spread =
      boot.draws.col(0).maxCoeff() - boot.draws.col(0).minCoeff();
  CHECK(spread > 1e-8);

  // Replaying the bootstrap reproduces it exactly.
  const BootstrapResult again = residual_bootstrap(fit, data, spec, cfg, 40);
  REQUIRE(again.draws.rows() == boot.draws.rows());
  CHECK((again.draws - boot.draws).cwiseAbs().maxCoeff() == 0.0);
}
