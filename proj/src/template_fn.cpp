#include "spcr/template_fn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "spcr/errors.hpp"

namespace spcr {

namespace {

void check_x(double x) {
  if (!(x >= 0.0 && x <= 1.0))
    throw std::domain_error("template argument must lie in [0,1]");
}

}  // namespace

double alternation_sign(SignSet s, int k) {
  // s_1, s_2, ... alternate; Plus starts with +1 (first segment rises).
  const bool odd = (k % 2) == 1;
  if (s == SignSet::Plus) return odd ? 1.0 : -1.0;
  return odd ? -1.0 : 1.0;
}

HeightVector heights_reconstruct(const UnconstrainedHeights& u) {
  if (u.l.size() < 1)
    throw std::invalid_argument("l must have M+1 >= 1 entries");
  if (!u.l.allFinite() || !std::isfinite(u.lambda0))
    throw std::invalid_argument("heights parameters must be finite");
  HeightVector h;
  h.sign = u.sign;
  h.lambda.resize(u.l.size() + 1);
  h.lambda[0] = u.lambda0;
  for (int k = 1; k < h.lambda.size(); ++k)
    h.lambda[k] = h.lambda[k - 1] + alternation_sign(u.sign, k) * std::exp(u.l[k - 1]);
  return h;
}

UnconstrainedHeights heights_unconstrain(const HeightVector& h) {
  if (!alternation_ok(h))
    throw std::invalid_argument("height vector violates strict alternation");
  UnconstrainedHeights u;
  u.sign = h.sign;
  u.lambda0 = h.lambda[0];
  u.l.resize(h.lambda.size() - 1);
  for (int k = 1; k < h.lambda.size(); ++k)
    u.l[k - 1] = std::log(std::abs(h.lambda[k] - h.lambda[k - 1]));
  return u;
}

bool alternation_ok(const HeightVector& h) {
  if (h.lambda.size() < 2) return false;
  for (int k = 1; k < h.lambda.size(); ++k) {
    const double diff = h.lambda[k] - h.lambda[k - 1];
    if (!(diff * alternation_sign(h.sign, k) > 0.0)) return false;
  }
  return true;
}

std::vector<double> BSplineOptions::default_fill() {
  std::vector<double> f;
  for (int i = 1; i <= 19; ++i) f.push_back(i * 0.05);
  return f;
}

TemplateSpec TemplateSpec::uniform_nodes(int M, TemplateFamily family) {
  if (M < 0) throw std::invalid_argument("M must be nonnegative");
  TemplateSpec s;
  s.family = family;
  s.nodes.resize(M + 2);
  for (int k = 0; k <= M + 1; ++k)
    s.nodes[k] = static_cast<double>(k) / (M + 1);
  s.bspline.fill_fractions = BSplineOptions::default_fill();
  return s;
}

int hermite_segment(const Eigen::VectorXd& nodes, double x) {
  const int n_seg = static_cast<int>(nodes.size()) - 1;
  if (x >= nodes[n_seg]) return n_seg - 1;  // x == 1 -> last segment
  int k = 0;
  while (k + 1 < n_seg && x >= nodes[k + 1]) ++k;
  return k;
}

double hermite_value(const Eigen::VectorXd& nodes, const Eigen::VectorXd& lambda,
                     double x) {
  const int k = hermite_segment(nodes, x);
  const double w = nodes[k + 1] - nodes[k];
  const double t = (x - nodes[k]) / w;
  const double t2 = t * t, t3 = t2 * t;
  return (2.0 * t3 - 3.0 * t2 + 1.0) * lambda[k] +
         (-2.0 * t3 + 3.0 * t2) * lambda[k + 1];
}

double hermite_slope(const Eigen::VectorXd& nodes, const Eigen::VectorXd& lambda,
                     double x) {
  const int k = hermite_segment(nodes, x);
  const double w = nodes[k + 1] - nodes[k];
  const double t = (x - nodes[k]) / w;
  return 6.0 * (t - t * t) * (lambda[k + 1] - lambda[k]) / w;
}

double hermite_eval(const TemplateSpec& spec, const HeightVector& h, double x) {
  check_x(x);
  return hermite_value(spec.nodes, h.lambda, x);
}

double hermite_deriv(const TemplateSpec& spec, const HeightVector& h, double x) {
  check_x(x);
  return hermite_slope(spec.nodes, h.lambda, x);
}

Eigen::VectorXd clamped_knots(int n_interior, int degree) {
  const int total = n_interior + 2 * (degree + 1);
  Eigen::VectorXd knots(total);
  for (int i = 0; i <= degree; ++i) knots[i] = 0.0;
  for (int i = 1; i <= n_interior; ++i)
    knots[degree + i] = static_cast<double>(i) / (n_interior + 1);
  for (int i = 0; i <= degree; ++i) knots[total - 1 - i] = 1.0;
  return knots;
}

namespace {

// Index of the knot span [knots[s], knots[s+1]) containing x, restricted to
// the valid range for a clamped vector.
int find_span(const Eigen::VectorXd& knots, int degree, double x) {
  const int n_basis = static_cast<int>(knots.size()) - degree - 1;
  if (x >= knots[n_basis]) return n_basis - 1;
  int lo = degree, hi = n_basis;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (x < knots[mid])
      hi = mid;
    else
      lo = mid;
  }
  return lo;
}

// Nonzero basis values N_{span-degree..span} at x (Cox-de Boor, de Boor's
// algorithm A2.2).
void basis_funs(const Eigen::VectorXd& knots, int degree, int span, double x,
                Eigen::VectorXd& N) {
  N.resize(degree + 1);
  Eigen::VectorXd left(degree + 1), right(degree + 1);
  N[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - knots[span + 1 - j];
    right[j] = knots[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = N[r] / (right[r + 1] + left[j - r]);
      N[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    N[j] = saved;
  }
}

}  // namespace

Eigen::VectorXd bspline_basis(const Eigen::VectorXd& knots, int degree,
                              double x) {
  check_x(x);
  const int n_basis = static_cast<int>(knots.size()) - degree - 1;
  Eigen::VectorXd full = Eigen::VectorXd::Zero(n_basis);
  const int span = find_span(knots, degree, x);
  Eigen::VectorXd N;
  basis_funs(knots, degree, span, x, N);
  for (int i = 0; i <= degree; ++i) full[span - degree + i] = N[i];
  return full;
}

Eigen::VectorXd bspline_basis_deriv(const Eigen::VectorXd& knots, int degree,
                                    double x) {
  check_x(x);
  const int n_basis = static_cast<int>(knots.size()) - degree - 1;
  Eigen::VectorXd full = Eigen::VectorXd::Zero(n_basis);
  if (degree == 0) return full;
  const int span = find_span(knots, degree, x);
  // Derivative via the lower-degree basis: N'_{i,m} = m (N_{i,m-1}/(t_{i+m}-t_i)
  // - N_{i+1,m-1}/(t_{i+m+1}-t_{i+1})).
  Eigen::VectorXd Nlow;
  basis_funs(knots, degree - 1, span, x, Nlow);  // N_{span-degree+1..span, m-1}
  for (int i = span - degree; i <= span; ++i) {
    double val = 0.0;
    const int lo_idx = i - (span - degree + 1);
    if (lo_idx >= 0 && lo_idx <= degree - 1) {
      const double den = knots[i + degree] - knots[i];
      if (den > 0.0) val += Nlow[lo_idx] / den;
    }
    const int hi_idx = lo_idx + 1;
    if (hi_idx >= 0 && hi_idx <= degree - 1) {
      const double den = knots[i + degree + 1] - knots[i + 1];
      if (den > 0.0) val -= Nlow[hi_idx] / den;
    }
    full[i] = degree * val;
  }
  return full;
}

double BSplineTemplate::eval(double x) const {
  return bspline_basis(knots, degree, x).dot(theta);
}

double BSplineTemplate::deriv(double x) const {
  return bspline_basis_deriv(knots, degree, x).dot(theta);
}

BSplineTemplate bspline_template_fit(const TemplateSpec& spec,
                                     const HeightVector& h) {
  if (spec.family != TemplateFamily::BSpline)
    throw std::invalid_argument("template family must be BSpline");
  if (h.lambda.size() != spec.nodes.size())
    throw std::invalid_argument("heights and nodes disagree on M");
  const BSplineOptions& opt = spec.bspline;
  const std::vector<double> fill = opt.fill_fractions.empty()
                                       ? BSplineOptions::default_fill()
                                       : opt.fill_fractions;
  const Eigen::VectorXd knots = clamped_knots(opt.n_interior_knots, opt.degree);
  const int nb = static_cast<int>(knots.size()) - opt.degree - 1;
  const int M = spec.M();
  const int n_fill = static_cast<int>(fill.size()) * (M + 1);
  const int n_con = (M + 2) + M;  // value rows + interior derivative rows

  // Fill design matrix and linearly interpolated targets.
  Eigen::MatrixXd B(n_fill, nb);
  Eigen::VectorXd y(n_fill);
  int row = 0;
  for (int k = 0; k <= M; ++k) {
    const double bx = spec.nodes[k], bw = spec.nodes[k + 1] - spec.nodes[k];
    const double ly = h.lambda[k], lw = h.lambda[k + 1] - h.lambda[k];
    for (const double d : fill) {
      B.row(row) = bspline_basis(knots, opt.degree, bx + d * bw).transpose();
      y[row] = ly + d * lw;
      ++row;
    }
  }

  // Discrete second-difference penalty P = D2' D2.
  Eigen::MatrixXd D2 = Eigen::MatrixXd::Zero(nb - 2, nb);
  for (int i = 0; i < nb - 2; ++i) {
    D2(i, i) = 1.0;
    D2(i, i + 1) = -2.0;
    D2(i, i + 2) = 1.0;
  }

  // Equality constraints: values at all nodes, zero slope at interior nodes.
  Eigen::MatrixXd C(n_con, nb);
  Eigen::VectorXd d(n_con);
  for (int k = 0; k <= M + 1; ++k) {
    C.row(k) = bspline_basis(knots, opt.degree, spec.nodes[k]).transpose();
    d[k] = h.lambda[k];
  }
  for (int k = 1; k <= M; ++k) {
    C.row(M + 1 + k) =
        bspline_basis_deriv(knots, opt.degree, spec.nodes[k]).transpose();
    d[M + 1 + k] = 0.0;
  }

  // KKT system for min ||B theta - y||^2 + alpha theta' P theta s.t. C theta = d.
  const int dim = nb + n_con;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(dim, dim);
  K.topLeftCorner(nb, nb) =
      2.0 * (B.transpose() * B + opt.alpha * D2.transpose() * D2);
  K.topRightCorner(nb, n_con) = C.transpose();
  K.bottomLeftCorner(n_con, nb) = C;
  Eigen::VectorXd rhs(dim);
  rhs.head(nb) = 2.0 * B.transpose() * y;
  rhs.tail(n_con) = d;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (!lu.isInvertible()) {
    const int c_rank = Eigen::FullPivLU<Eigen::MatrixXd>(C).rank();
    std::ostringstream msg;
    msg << "singular KKT system in constrained spline fit: ";
    if (c_rank < n_con)
      msg << "constraint block rank " << c_rank << " < " << n_con;
    else
      msg << "penalized normal block deficient (fill grid too sparse: "
          << n_fill << " fill points, " << nb << " basis functions)";
    throw IllPosedError(msg.str());
  }
  const Eigen::VectorXd sol = lu.solve(rhs);

  BSplineTemplate out;
  out.degree = opt.degree;
  out.knots = knots;
  out.theta = sol.head(nb);

  const int found = count_stationary(
      [&out](double x) { return out.eval(x); }, opt.reject_grid);
  if (found != M) {
    std::ostringstream msg;
    msg << "constrained spline acquired " << found
        << " stationary points, expected " << M
        << "; raise alpha or reduce knots";
    throw NumericalError(msg.str());
  }
  return out;
}

int count_stationary(const std::function<double(double)>& g, int grid_size) {
  if (grid_size < 101)
    throw std::invalid_argument("grid_size must be at least 101");
  int changes = 0;
  int last = 0;
  double prev = g(0.0);
  for (int i = 1; i < grid_size; ++i) {
    const double x = static_cast<double>(i) / (grid_size - 1);
    const double cur = g(x);
    const double diff = cur - prev;
    prev = cur;
    const int s = diff > 0.0 ? 1 : (diff < 0.0 ? -1 : 0);
    if (s == 0) continue;
    if (last != 0 && s != last) ++changes;
    last = s;
  }
  return changes;
}

}  // namespace spcr
