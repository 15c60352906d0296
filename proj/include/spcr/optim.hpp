#ifndef SPCR_OPTIM_HPP
#define SPCR_OPTIM_HPP

#include <functional>
#include <string>

#include <Eigen/Core>

namespace spcr {

/// Value-only objective.
using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;

/// Objective with gradient written into the second argument (same dimension
/// as the input). Non-finite values signal an inadmissible point; the line
/// search backs off rather than aborting.
using ObjectiveGradFn =
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct BfgsOptions {
  int max_iter = 500;
  double grad_tol = 1e-6;      // infinity norm of the gradient
  double rel_obj_tol = 1e-10;  // relative objective decrease per iteration
};

struct BfgsResult {
  Eigen::VectorXd z;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iters = 0;
  bool converged = false;
  std::string message;
};

/// BFGS with a strong-Wolfe line search (c1 = 1e-4, c2 = 0.9). Accepted steps
/// never increase the objective. Fully deterministic: no randomness, no
/// scheduling dependence.
BfgsResult bfgs_minimize(const ObjectiveGradFn& fg, const Eigen::VectorXd& z0,
                         const BfgsOptions& opts = {});

/// Central finite-difference Hessian with per-coordinate steps
/// h_i = 1e-5 (1 + |z_i|), returned as (H + H^T)/2. Throws NumericalError on
/// non-finite entries.
Eigen::MatrixXd fd_hessian(const ObjectiveFn& f, const Eigen::VectorXd& z);

}  // namespace spcr

#endif
