#ifndef SPCR_TEMPLATE_FN_HPP
#define SPCR_TEMPLATE_FN_HPP

#include <functional>
#include <vector>

#include <Eigen/Core>

namespace spcr {

/// Which alternation the height vector follows: Plus starts with a maximum
/// (lambda0 < lambda1 > lambda2 < ...), Minus with a minimum.
enum class SignSet { Plus, Minus };

enum class TemplateFamily { Hermite, BSpline };

/// Heights lambda_0..lambda_{M+1} with strict alternation; the template takes
/// value lambda_k at node b_k, so alternation forces exactly M interior extrema.
struct HeightVector {
  Eigen::VectorXd lambda;
  SignSet sign = SignSet::Plus;

  int M() const { return static_cast<int>(lambda.size()) - 2; }
};

/// Unconstrained parameterization: lambda_k = lambda_{k-1} + s_k * exp(l_k)
/// with alternating signs s_k; any finite (lambda0, l) reconstructs a valid
/// alternating height vector.
struct UnconstrainedHeights {
  double lambda0 = 0.0;
  Eigen::VectorXd l;  // M+1 log absolute increments
  SignSet sign = SignSet::Plus;

  int M() const { return static_cast<int>(l.size()) - 1; }
};

/// Increment sign s_k applied between lambda_{k-1} and lambda_k; Plus starts
/// with +1 (first segment rises toward a maximum).
double alternation_sign(SignSet s, int k);

HeightVector heights_reconstruct(const UnconstrainedHeights& u);

/// Inverse of heights_reconstruct; throws std::invalid_argument if the input
/// violates strict alternation.
UnconstrainedHeights heights_unconstrain(const HeightVector& h);

bool alternation_ok(const HeightVector& h);

struct BSplineOptions {
  int degree = 3;
  int n_interior_knots = 100;
  double alpha = 1e6;                  // smoothing weight on the 2nd-difference penalty
  std::vector<double> fill_fractions;  // default {0.05, 0.10, ..., 0.95}
  int reject_grid = 2001;              // grid for the extra-stationary-point check

  static std::vector<double> default_fill();
};

/// Node locations b_0 = 0 < b_1 < ... < b_{M+1} = 1 plus the template family.
struct TemplateSpec {
  Eigen::VectorXd nodes;
  TemplateFamily family = TemplateFamily::Hermite;
  BSplineOptions bspline{};

  int M() const { return static_cast<int>(nodes.size()) - 2; }

  /// Library default: equispaced nodes b_k = k / (M+1).
  static TemplateSpec uniform_nodes(int M,
                                    TemplateFamily family = TemplateFamily::Hermite);
};

/// Piecewise Hermite cubic through (b_k, lambda_k) with zero slope at every
/// node; value is continuous and interpolates the heights exactly.
double hermite_eval(const TemplateSpec& spec, const HeightVector& h, double x);

/// One-sided segment derivative 6 (t - t^2)(lambda_{k+1} - lambda_k) / (b_{k+1} - b_k);
/// exactly zero at every interior node.
double hermite_deriv(const TemplateSpec& spec, const HeightVector& h, double x);

/// Low-level overloads used by the model hot path (no spec object needed).
double hermite_value(const Eigen::VectorXd& nodes, const Eigen::VectorXd& lambda,
                     double x);
double hermite_slope(const Eigen::VectorXd& nodes, const Eigen::VectorXd& lambda,
                     double x);

/// Index k of the active segment [b_k, b_{k+1}) containing x (last segment
/// is closed at 1).
int hermite_segment(const Eigen::VectorXd& nodes, double x);

/// A fitted constrained B-spline template.
struct BSplineTemplate {
  int degree = 3;
  Eigen::VectorXd knots;  // full clamped knot vector
  Eigen::VectorXd theta;

  double eval(double x) const;
  double deriv(double x) const;
  int n_basis() const { return static_cast<int>(theta.size()); }
};

/// All B-spline basis values at x (length = #knots - degree - 1).
Eigen::VectorXd bspline_basis(const Eigen::VectorXd& knots, int degree, double x);
Eigen::VectorXd bspline_basis_deriv(const Eigen::VectorXd& knots, int degree,
                                    double x);

/// Clamped knot vector with n_interior equispaced interior knots on (0,1).
Eigen::VectorXd clamped_knots(int n_interior, int degree);

/// Penalized least squares fit of a B-spline template: equality constraints
/// pin the value at every node and the derivative at every interior node; fill
/// targets interpolate the heights linearly inside each segment; the discrete
/// second-difference penalty (weight alpha) smooths the remaining freedom.
/// Throws IllPosedError if the KKT system is singular and NumericalError if
/// the fitted curve has more than M stationary points.
BSplineTemplate bspline_template_fit(const TemplateSpec& spec,
                                     const HeightVector& h);

/// Counts strict sign changes of the numerical derivative of g on a uniform
/// grid over [0,1]; zero-length differences are skipped.
int count_stationary(const std::function<double(double)>& g, int grid_size);

}  // namespace spcr

#endif
