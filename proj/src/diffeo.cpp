#include "spcr/diffeo.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "spcr/errors.hpp"

namespace spcr {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSqrt2 = std::numbers::sqrt2;

void check_t(double t) {
  if (!(t >= 0.0 && t <= 1.0))
    throw std::domain_error("t must lie in [0,1]");
}

}  // namespace

BasisCoefficients::BasisCoefficients(Eigen::VectorXd b) : beta(std::move(b)) {
  if (beta.size() < 1) throw std::invalid_argument("beta must have p >= 1");
  if (!beta.allFinite())
    throw std::invalid_argument("beta entries must be finite");
  norm = beta.norm();
  if (norm >= kPi)
    throw std::invalid_argument("||beta|| must be strictly less than pi");
}

BasisCoefficients squash(const Eigen::VectorXd& y) {
  if (y.size() < 1) throw std::invalid_argument("y must have p >= 1");
  if (!y.allFinite()) throw std::invalid_argument("y entries must be finite");
  const double s = std::sqrt(1.0 + y.squaredNorm());
  return BasisCoefficients(kPi / s * y);
}

Eigen::MatrixXd squash_jacobian(const Eigen::VectorXd& y) {
  const double q = 1.0 + y.squaredNorm();
  const double s = std::sqrt(q);
  const Eigen::Index p = y.size();
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(p, p) * (kPi / s);
  J.noalias() -= (kPi / (q * s)) * (y * y.transpose());
  return J;
}

double v_eval(const BasisCoefficients& b, double t) {
  check_t(t);
  double acc = 0.0;
  for (int j = 1; j <= b.p(); ++j)
    acc += b.beta[j - 1] * std::cos(j * kPi * t);
  return kSqrt2 * acc;
}

double int_v(const BasisCoefficients& b, double t) {
  check_t(t);
  if (t == 0.0 || t == 1.0) return 0.0;  // sin(pi j) vanishes for integer j
  double acc = 0.0;
  for (int j = 1; j <= b.p(); ++j)
    acc += b.beta[j - 1] * std::sin(j * kPi * t) / (j * kPi);
  return kSqrt2 * acc;
}

double int_v2(const BasisCoefficients& b, double t) {
  check_t(t);
  if (t == 0.0) return 0.0;
  if (t == 1.0) return b.norm * b.norm;  // basis orthonormality
  const int p = b.p();
  // sin(pi m t) for m = 1..2p covers every diagonal and cross term.
  Eigen::VectorXd sins(2 * p);
  for (int m = 1; m <= 2 * p; ++m) sins[m - 1] = std::sin(m * kPi * t);
  double acc = 0.0;
  for (int j = 1; j <= p; ++j) {
    const double bj = b.beta[j - 1];
    acc += bj * bj * (t + sins[2 * j - 1] / (2.0 * kPi * j));
    for (int k = j + 1; k <= p; ++k) {
      const double cross = sins[k + j - 1] / (kPi * (k + j)) +
                           sins[k - j - 1] / (kPi * (k - j));
      acc += 2.0 * bj * b.beta[k - 1] * cross;
    }
  }
  return acc;
}

WarpCoeffs warp_coeffs(double r) {
  WarpCoeffs w{};
  if (r < kSmallNorm) {
    // 4th-order expansions keep the coefficients continuous through r = 0.
    const double r2 = r * r;
    w.A = 1.0 - r2 + r2 * r2 / 3.0;            // cos^2 r
    w.B = 2.0 - 4.0 / 3.0 * r2 + 4.0 / 15.0 * r2 * r2;   // sin(2r)/r
    w.C = 1.0 - r2 / 3.0 + 2.0 / 45.0 * r2 * r2;         // sin^2 r / r^2
    w.dA = -2.0 * r + 4.0 / 3.0 * r2 * r;
    w.dB = -8.0 / 3.0 * r + 16.0 / 15.0 * r2 * r;
    w.dC = -2.0 / 3.0 * r + 8.0 / 45.0 * r2 * r;
    return w;
  }
  const double cr = std::cos(r), sr = std::sin(r);
  const double s2r = std::sin(2.0 * r), c2r = std::cos(2.0 * r);
  w.A = cr * cr;
  w.B = s2r / r;
  w.C = sr * sr / (r * r);
  w.dA = -s2r;
  w.dB = (2.0 * r * c2r - s2r) / (r * r);
  w.dC = (r * s2r - 2.0 * sr * sr) / (r * r * r);
  return w;
}

double sinc_r(double r) {
  if (r < kSmallNorm) {
    const double r2 = r * r;
    return 1.0 - r2 / 6.0 + r2 * r2 / 120.0;
  }
  return std::sin(r) / r;
}

double gamma_eval(const BasisCoefficients& b, double t) {
  check_t(t);
  if (t == 0.0) return 0.0;
  if (t == 1.0) return 1.0;  // cos^2 + sin^2 closes the telescope analytically
  const WarpCoeffs w = warp_coeffs(b.norm);
  return w.A * t + w.B * int_v(b, t) + w.C * int_v2(b, t);
}

double gamma_deriv(const BasisCoefficients& b, double t) {
  check_t(t);
  const double q = std::cos(b.norm) + sinc_r(b.norm) * v_eval(b, t);
  return q * q;
}

double gamma_inverse(const BasisCoefficients& b, double y, double tol) {
  if (!(y >= 0.0 && y <= 1.0))
    throw std::domain_error("gamma_inverse target must lie in [0,1]");
  if (tol <= 0.0) throw std::invalid_argument("tol must be positive");
  if (y == 0.0) return 0.0;
  if (y == 1.0) return 1.0;

  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    if (gamma_eval(b, mid) < y)
      lo = mid;
    else
      hi = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = gamma_eval(b, x) - y;
    if (std::abs(f) <= tol) return x;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    const double d = gamma_deriv(b, x);
    double step_x = x - f / d;
    if (!(d > 1e-14) || !(step_x > lo) || !(step_x < hi))
      step_x = 0.5 * (lo + hi);  // Newton left the bracket; bisect instead
    x = step_x;
  }
  throw NumericalError("gamma_inverse failed to converge");
}

Eigen::VectorXd gamma_grad(const BasisCoefficients& b, double t) {
  check_t(t);
  const int p = b.p();
  if (t == 0.0 || t == 1.0) return Eigen::VectorXd::Zero(p);
  if (b.norm < kSmallNorm) {
    // Degenerate-limit fallback: central differences through the closed form.
    const double h = 1e-7;
    Eigen::VectorXd g(p);
    for (int j = 0; j < p; ++j) {
      Eigen::VectorXd bp = b.beta, bm = b.beta;
      bp[j] += h;
      bm[j] -= h;
      g[j] = (gamma_eval(BasisCoefficients(bp), t) -
              gamma_eval(BasisCoefficients(bm), t)) /
             (2.0 * h);
    }
    return g;
  }
  const double r = b.norm;
  const WarpCoeffs w = warp_coeffs(r);
  const double i1 = int_v(b, t);
  const double i2 = int_v2(b, t);
  const Eigen::MatrixXd G = gram_matrix(p, t);
  Eigen::VectorXd grad_i1(p);
  for (int j = 1; j <= p; ++j)
    grad_i1[j - 1] = kSqrt2 * std::sin(j * kPi * t) / (j * kPi);
  const double bracket = w.dA * t + w.dB * i1 + w.dC * i2;
  return (bracket / r) * b.beta + w.B * grad_i1 + 2.0 * w.C * (G * b.beta);
}

Eigen::MatrixXd gram_matrix(int p, double t) {
  Eigen::MatrixXd G(p, p);
  Eigen::VectorXd sins(2 * p);
  for (int m = 1; m <= 2 * p; ++m) sins[m - 1] = std::sin(m * kPi * t);
  for (int j = 1; j <= p; ++j) {
    G(j - 1, j - 1) = t + sins[2 * j - 1] / (2.0 * kPi * j);
    for (int k = j + 1; k <= p; ++k) {
      const double g = sins[k + j - 1] / (kPi * (k + j)) +
                       sins[k - j - 1] / (kPi * (k - j));
      G(j - 1, k - 1) = g;
      G(k - 1, j - 1) = g;
    }
  }
  return G;
}

GammaTable::GammaTable(int p, double t)
    : t_(t), s1_(p), c_(p), G_(gram_matrix(p, t)) {
  for (int j = 1; j <= p; ++j) {
    s1_[j - 1] = kSqrt2 * std::sin(j * kPi * t) / (j * kPi);
    c_[j - 1] = kSqrt2 * std::cos(j * kPi * t);
  }
}

double GammaTable::gamma(const BasisCoefficients& b) const {
  if (t_ == 0.0) return 0.0;
  if (t_ == 1.0) return 1.0;
  const WarpCoeffs w = warp_coeffs(b.norm);
  return w.A * t_ + w.B * s1_.dot(b.beta) + w.C * b.beta.dot(G_ * b.beta);
}

Eigen::VectorXd GammaTable::gamma_grad(const BasisCoefficients& b) const {
  const int p = b.p();
  if (t_ == 0.0 || t_ == 1.0) return Eigen::VectorXd::Zero(p);
  if (b.norm < kSmallNorm) {
    const double h = 1e-7;
    Eigen::VectorXd g(p);
    for (int j = 0; j < p; ++j) {
      Eigen::VectorXd bp = b.beta, bm = b.beta;
      bp[j] += h;
      bm[j] -= h;
      g[j] = (gamma(BasisCoefficients(bp)) - gamma(BasisCoefficients(bm))) /
             (2.0 * h);
    }
    return g;
  }
  const double r = b.norm;
  const WarpCoeffs w = warp_coeffs(r);
  const Eigen::VectorXd Gb = G_ * b.beta;
  const double i1 = s1_.dot(b.beta);
  const double i2 = b.beta.dot(Gb);
  const double bracket = w.dA * t_ + w.dB * i1 + w.dC * i2;
  return (bracket / r) * b.beta + w.B * s1_ + 2.0 * w.C * Gb;
}

}  // namespace spcr
