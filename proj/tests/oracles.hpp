#ifndef SPCR_TESTS_ORACLES_HPP
#define SPCR_TESTS_ORACLES_HPP

// Independent numerical oracles used only by the test suite. These are kept
// deliberately separate from the library code paths they check: quadrature
// never calls the closed forms, and the finite-difference helpers never call
// the analytic gradients.

#include <cmath>
#include <functional>
#include <stdexcept>

#include <Eigen/Core>

namespace oracles {

namespace detail {

inline double simpson(const std::function<double(double)>& f, double a,
                      double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_step(const std::function<double(double)>& f, double a,
                            double b, double fa, double fm, double fb,
                            double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(f, a, m, fa, flm, fm);
  const double right = simpson(f, m, b, fm, frm, fb);
  const double delta = left + right - whole;
  if (depth <= 0) throw std::runtime_error("adaptive quadrature depth limit");
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature with Richardson correction.
inline double integrate(const std::function<double(double)>& f, double a,
                        double b, double tol = 1e-13) {
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = detail::simpson(f, a, b, fa, fm, fb);
  return detail::adaptive_step(f, a, b, fa, fm, fb, whole, tol, 60);
}

/// Central finite-difference gradient.
inline Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& z, double h = 1e-6) {
  Eigen::VectorXd g(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    Eigen::VectorXd zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    g[i] = (f(zp) - f(zm)) / (2.0 * h);
  }
  return g;
}

/// Max relative error between an analytic gradient and its FD counterpart,
/// with the denominator floored to avoid blowing up on near-zero components.
inline double grad_rel_err(const Eigen::VectorXd& analytic,
                           const Eigen::VectorXd& fd) {
  const double scale =
      std::max({analytic.cwiseAbs().maxCoeff(), fd.cwiseAbs().maxCoeff(), 1e-8});
  return (analytic - fd).cwiseAbs().maxCoeff() / scale;
}

}  // namespace oracles

#endif
