#include "spcr/optim.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "spcr/errors.hpp"

namespace spcr {

namespace {

constexpr double kC1 = 1e-4;
constexpr double kC2 = 0.9;
constexpr int kMaxLineEvals = 60;

struct LinePoint {
  double alpha = 0.0;
  double phi = 0.0;
  double dphi = 0.0;
  Eigen::VectorXd z;
  Eigen::VectorXd grad;
};

/// Strong-Wolfe line search (bracket then zoom, bisection refinement).
/// Returns false when no admissible step was found; out is untouched then.
bool wolfe_search(const ObjectiveGradFn& fg, const Eigen::VectorXd& z0,
                  double phi0, const Eigen::VectorXd& g0,
                  const Eigen::VectorXd& dir, double dphi0, LinePoint& out) {
  const double armijo_slope = kC1 * dphi0;
  const double curvature = -kC2 * dphi0;
  int evals = 0;

  auto eval = [&](double alpha, LinePoint& pt) {
    pt.alpha = alpha;
    pt.z = z0 + alpha * dir;
    pt.grad.resizeLike(z0);
    pt.phi = fg(pt.z, pt.grad);
    pt.dphi = pt.grad.dot(dir);
    ++evals;
  };

  auto admissible = [&](const LinePoint& pt) {
    return std::isfinite(pt.phi) && pt.grad.allFinite() &&
           pt.phi <= phi0 + pt.alpha * armijo_slope &&
           std::abs(pt.dphi) <= curvature;
  };

  // lo always satisfies sufficient decrease; hi brackets a Wolfe point.
  auto zoom = [&](LinePoint lo, double hi_alpha) -> bool {
    double width = std::abs(hi_alpha - lo.alpha);
    LinePoint trial;
    while (evals < kMaxLineEvals && width > 1e-16 * (1.0 + lo.alpha)) {
      eval(0.5 * (lo.alpha + hi_alpha), trial);
      const bool decrease = std::isfinite(trial.phi) &&
                            trial.phi <= phi0 + trial.alpha * armijo_slope &&
                            trial.phi < lo.phi;
      if (!decrease) {
        hi_alpha = trial.alpha;
      } else {
        if (std::abs(trial.dphi) <= curvature) {
          out = std::move(trial);
          return true;
        }
        if (trial.dphi * (hi_alpha - lo.alpha) >= 0.0) hi_alpha = lo.alpha;
        lo = std::move(trial);
      }
      width = std::abs(hi_alpha - lo.alpha);
    }
    // Interval collapsed: fall back to the best sufficient-decrease point.
    if (lo.alpha > 0.0 && std::isfinite(lo.phi) && lo.grad.allFinite()) {
      out = std::move(lo);
      return true;
    }
    return false;
  };

  LinePoint prev;
  prev.alpha = 0.0;
  prev.phi = phi0;
  prev.dphi = dphi0;
  prev.z = z0;
  prev.grad = g0;

  double alpha = 1.0;
  while (evals < kMaxLineEvals) {
    LinePoint cur;
    eval(alpha, cur);
    const bool bad = !std::isfinite(cur.phi) || !cur.grad.allFinite();
    if (bad || cur.phi > phi0 + alpha * armijo_slope ||
        (prev.alpha > 0.0 && cur.phi >= prev.phi)) {
      return zoom(std::move(prev), cur.alpha);
    }
    if (std::abs(cur.dphi) <= curvature) {
      out = std::move(cur);
      return true;
    }
    if (cur.dphi >= 0.0) {
      return zoom(std::move(cur), prev.alpha);
    }
    prev = std::move(cur);
    alpha *= 2.0;
    if (alpha > 1e8) break;
  }
  if (prev.alpha > 0.0 && admissible(prev)) {
    out = std::move(prev);
    return true;
  }
  return false;
}

}  // namespace

BfgsResult bfgs_minimize(const ObjectiveGradFn& fg, const Eigen::VectorXd& z0,
                         const BfgsOptions& opts) {
  const auto d = z0.size();
  BfgsResult res;
  res.z = z0;
  res.grad.resize(d);
  res.f = fg(res.z, res.grad);
  if (!std::isfinite(res.f) || !res.grad.allFinite()) {
    res.message = "objective not finite at the initial point";
    return res;
  }

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);
  bool scale_pending = true;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if (res.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }

    Eigen::VectorXd dir = -(H * res.grad);
    double dphi0 = res.grad.dot(dir);
    if (!(dphi0 < 0.0)) {
      // Curvature information went stale; restart from steepest descent.
      H.setIdentity();
      scale_pending = true;
      dir = -res.grad;
      dphi0 = res.grad.dot(dir);
    }

    LinePoint step;
    if (!wolfe_search(fg, res.z, res.f, res.grad, dir, dphi0, step)) {
      res.message = "line search found no admissible step";
      return res;
    }
    res.iters = iter + 1;

    const Eigen::VectorXd s = step.z - res.z;
    const Eigen::VectorXd y = step.grad - res.grad;
    const double f_old = res.f;
    res.z = std::move(step.z);
    res.f = step.phi;
    res.grad = std::move(step.grad);

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (scale_pending) {
        H *= sy / y.squaredNorm();
        scale_pending = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded to two
      // rank-one corrections to avoid forming the projector.
      const double yHy = y.dot(Hy);
      H.noalias() -= rho * (Hy * s.transpose() + s * Hy.transpose());
      H.noalias() += (rho * rho * yHy + rho) * (s * s.transpose());
    }

    const double denom =
        std::max({1.0, std::abs(f_old), std::abs(res.f)});
    if ((f_old - res.f) / denom <= opts.rel_obj_tol) {
      res.converged = true;
      res.message = "objective decrease below tolerance";
      return res;
    }
  }
  res.message = "iteration limit reached";
  return res;
}

Eigen::MatrixXd fd_hessian(const ObjectiveFn& f, const Eigen::VectorXd& z) {
  const auto d = z.size();
  Eigen::VectorXd h(d);
  for (Eigen::Index i = 0; i < d; ++i) h[i] = 1e-5 * (1.0 + std::abs(z[i]));

  const double f0 = f(z);
  Eigen::MatrixXd H(d, d);
  Eigen::VectorXd zt = z;
  for (Eigen::Index i = 0; i < d; ++i) {
    zt[i] = z[i] + h[i];
    const double fp = f(zt);
    zt[i] = z[i] - h[i];
    const double fm = f(zt);
    zt[i] = z[i];
    H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    for (Eigen::Index j = i + 1; j < d; ++j) {
      zt[i] = z[i] + h[i];
      zt[j] = z[j] + h[j];
      const double fpp = f(zt);
      zt[j] = z[j] - h[j];
      const double fpm = f(zt);
      zt[i] = z[i] - h[i];
      const double fmm = f(zt);
      zt[j] = z[j] + h[j];
      const double fmp = f(zt);
      zt[i] = z[i];
      zt[j] = z[j];
      H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
    }
  }
  H = 0.5 * (H + H.transpose()).eval();
  if (!H.allFinite())
    throw NumericalError("finite-difference Hessian has non-finite entries");
  return H;
}

}  // namespace spcr
