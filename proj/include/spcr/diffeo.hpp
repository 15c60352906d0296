#ifndef SPCR_DIFFEO_HPP
#define SPCR_DIFFEO_HPP

#include <Eigen/Core>

namespace spcr {

/// Warp coefficients beta in R^p with ||beta|| < pi.
///
/// beta parameterizes the tangent vector v_beta(t) = sum_j beta_j sqrt(2) cos(j pi t);
/// the warp gamma_beta is the integral of the squared exponential-map image of
/// v_beta on the unit Hilbert sphere and is a diffeomorphism of [0,1] whenever
/// ||beta|| < pi.
struct BasisCoefficients {
  Eigen::VectorXd beta;
  double norm = 0.0;  // cached ||beta||

  explicit BasisCoefficients(Eigen::VectorXd b);
  int p() const { return static_cast<int>(beta.size()); }
};

/// Unconstrained-to-ball reparameterization beta = pi * y / sqrt(1 + ||y||^2).
/// Smooth, injective, and strictly interior: ||beta|| < pi for every finite y.
BasisCoefficients squash(const Eigen::VectorXd& y);

/// Jacobian d beta / d y of the squash map (p x p).
Eigen::MatrixXd squash_jacobian(const Eigen::VectorXd& y);

/// v_beta(t) = sum_j beta_j sqrt(2) cos(j pi t).
double v_eval(const BasisCoefficients& b, double t);

/// Closed form of int_0^t v_beta(s) ds; zero at both endpoints.
double int_v(const BasisCoefficients& b, double t);

/// Closed form of int_0^t v_beta(s)^2 ds; equals ||beta||^2 at t = 1.
double int_v2(const BasisCoefficients& b, double t);

/// The warp gamma_beta(t); identity when beta = 0, pinned at 0 and 1.
double gamma_eval(const BasisCoefficients& b, double t);

/// gamma'_beta(t) = (cos||beta|| + sin||beta||/||beta|| * v_beta(t))^2 >= 0.
double gamma_deriv(const BasisCoefficients& b, double t);

/// Solves gamma_beta(t) = y on [0,1] by bisection to a 1e-3 bracket followed
/// by safeguarded Newton steps. Monotonicity of gamma guarantees a unique root.
double gamma_inverse(const BasisCoefficients& b, double y, double tol = 1e-10);

/// Analytic gradient of gamma_beta(t) with respect to beta; below the small-norm
/// threshold it falls back to central finite differences (h = 1e-7).
Eigen::VectorXd gamma_grad(const BasisCoefficients& b, double t);

/// Norm below which the closed form switches to series expansions / FD fallback.
inline constexpr double kSmallNorm = 1e-6;

/// sin(r)/r with a 4th-order expansion below kSmallNorm.
double sinc_r(double r);

/// Scalar coefficients of the closed form gamma = A t + B I1 + C I2 and their
/// derivatives in r = ||beta||; the r -> 0 limits are (1, 2, 1) and (0, 0, 0).
struct WarpCoeffs {
  double A, B, C;     // cos^2 r, sin(2r)/r, sin^2 r / r^2
  double dA, dB, dC;  // d/dr of the above
};
WarpCoeffs warp_coeffs(double r);

/// Symmetric Gram matrix G(t) with I2(t) = beta' G(t) beta and grad I2 = 2 G beta.
/// G_jj = t + sin(2 pi j t)/(2 pi j); G_jk = sin(pi(k+j)t)/(pi(k+j)) + sin(pi(k-j)t)/(pi(k-j)).
Eigen::MatrixXd gram_matrix(int p, double t);

/// Per-point trig tables for repeated warp evaluation at fixed t with varying
/// beta: the likelihood hot path builds one table per data point. Immutable
/// after construction and safe to share across threads.
class GammaTable {
 public:
  GammaTable(int p, double t);

  double t() const { return t_; }
  double v(const Eigen::VectorXd& beta) const { return c_.dot(beta); }
  double int_v(const Eigen::VectorXd& beta) const { return s1_.dot(beta); }
  double int_v2(const Eigen::VectorXd& beta) const {
    return beta.dot(G_ * beta);
  }
  const Eigen::VectorXd& grad_int_v() const { return s1_; }
  Eigen::VectorXd G_times(const Eigen::VectorXd& beta) const {
    return G_ * beta;
  }

  double gamma(const BasisCoefficients& b) const;
  /// Gradient of gamma at this t; closed form, FD-free (valid for any norm).
  Eigen::VectorXd gamma_grad(const BasisCoefficients& b) const;

 private:
  double t_;
  Eigen::VectorXd s1_;  // sqrt2 sin(pi j t)/(pi j)
  Eigen::VectorXd c_;   // sqrt2 cos(pi j t)
  Eigen::MatrixXd G_;
};

}  // namespace spcr

#endif
