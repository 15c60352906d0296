#include "spcr/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "spcr/errors.hpp"

namespace spcr {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

Dataset Dataset::from_xy(Eigen::VectorXd x_user, Eigen::VectorXd y) {
  if (x_user.size() != y.size())
    throw DataError("x and y must have equal length");
  if (x_user.size() < 1) throw DataError("dataset must be nonempty");
  if (!x_user.allFinite() || !y.allFinite())
    throw DataError("dataset entries must be finite");
  const double lo = x_user.minCoeff(), hi = x_user.maxCoeff();
  if (!(hi > lo))
    throw DataError("covariate is constant; affine map would be degenerate");
  const double margin = 1e-3 * (hi - lo);
  Dataset d;
  d.x_raw = std::move(x_user);
  d.y_obs = std::move(y);
  d.affine.shift = lo - margin;
  d.affine.scale = (hi - lo) + 2.0 * margin;
  d.x = (d.x_raw.array() - d.affine.shift) / d.affine.scale;
  return d;
}

ModelParams::ModelParams(UnconstrainedHeights h, Eigen::VectorXd y, double ls)
    : heights(std::move(h)),
      y_warp(std::move(y)),
      log_sigma(ls),
      beta(squash(y_warp)),
      lambda(heights_reconstruct(heights)) {
  if (!std::isfinite(ls)) throw std::invalid_argument("log_sigma must be finite");
}

Eigen::VectorXd pack_full(const ModelParams& params) {
  Eigen::VectorXd z(params.M() + 3 + params.p());
  z.head(params.M() + 2 + params.p()) = pack_mean(params);
  z[z.size() - 1] = params.log_sigma;
  return z;
}

Eigen::VectorXd pack_mean(const ModelParams& params) {
  const int M = params.M(), p = params.p();
  Eigen::VectorXd z(M + 2 + p);
  z[0] = params.heights.lambda0;
  z.segment(1, M + 1) = params.heights.l;
  z.segment(M + 2, p) = params.y_warp;
  return z;
}

ModelParams unpack_mean(const Eigen::VectorXd& z, int M, int p, SignSet sign,
                        double log_sigma) {
  if (z.size() != M + 2 + p)
    throw std::invalid_argument("packed vector has wrong dimension");
  UnconstrainedHeights h;
  h.lambda0 = z[0];
  h.l = z.segment(1, M + 1);
  h.sign = sign;
  return ModelParams(std::move(h), z.segment(M + 2, p), log_sigma);
}

ModelParams unpack_full(const Eigen::VectorXd& z, int M, int p, SignSet sign) {
  if (z.size() != M + 3 + p)
    throw std::invalid_argument("packed vector has wrong dimension");
  return unpack_mean(z.head(M + 2 + p), M, p, sign, z[z.size() - 1]);
}

double predict(const ModelParams& params, const TemplateSpec& spec, double x) {
  const double u = gamma_eval(params.beta, x);
  return hermite_value(spec.nodes, params.lambda.lambda, u);
}

double sse(const ModelParams& params, const TemplateSpec& spec,
           const Dataset& data) {
  double acc = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const double r = data.y_obs[i] - predict(params, spec, data.x[i]);
    acc += r * r;
  }
  return acc;
}

double neg_log_lik(const ModelParams& params, const TemplateSpec& spec,
                   const Dataset& data) {
  const double s2 = params.sigma() * params.sigma();
  return 0.5 * data.n() * std::log(kTwoPi * s2) +
         sse(params, spec, data) / (2.0 * s2);
}

Eigen::VectorXd loss_grad(const ModelParams& params, const TemplateSpec& spec,
                          const Dataset& data) {
  return ModelWorkspace(data, spec, params.p()).loss_grad(params);
}

Eigen::VectorXd stationary_points(const ModelParams& params,
                                  const TemplateSpec& spec, double tol) {
  const int M = spec.M();
  Eigen::VectorXd out(M);
  for (int k = 1; k <= M; ++k)
    out[k - 1] = gamma_inverse(params.beta, spec.nodes[k], tol);
  for (int k = 1; k < M; ++k)
    if (!(out[k] > out[k - 1]))
      throw NumericalError("stationary points not strictly ascending");
  return out;
}

ModelWorkspace::ModelWorkspace(const Dataset& data, const TemplateSpec& spec,
                               int p)
    : ModelWorkspace(data, spec, p, Eigen::VectorXd()) {}

ModelWorkspace::ModelWorkspace(const Dataset& data, const TemplateSpec& spec,
                               int p, Eigen::VectorXd weights)
    : data_(data), spec_(spec), p_(p), M_(spec.M()), w_(std::move(weights)) {
  if (p < 1) throw std::invalid_argument("basis dimension p must be >= 1");
  if (spec.family != TemplateFamily::Hermite)
    throw ConfigError("estimation supports the hermite template family only");
  if (w_.size() > 0) {
    if (w_.size() != data_.n())
      throw std::invalid_argument("weights must match the sample size");
    if (!w_.allFinite() || w_.minCoeff() <= 0.0)
      throw std::invalid_argument("weights must be positive and finite");
    w_total_ = w_.sum();
  } else {
    w_total_ = static_cast<double>(data_.n());
  }
  tables_.reserve(static_cast<std::size_t>(data_.n()));
  for (int i = 0; i < data_.n(); ++i) tables_.emplace_back(p, data_.x[i]);
}

void ModelWorkspace::predict_all(const ModelParams& params,
                                 Eigen::VectorXd& out) const {
  out.resize(data_.n());
  for (int i = 0; i < data_.n(); ++i) {
    const double u = tables_[i].gamma(params.beta);
    out[i] = hermite_value(spec_.nodes, params.lambda.lambda, u);
  }
}

double ModelWorkspace::sse(const ModelParams& params) const {
  double acc = 0.0;
  for (int i = 0; i < data_.n(); ++i) {
    const double u = tables_[i].gamma(params.beta);
    const double r =
        data_.y_obs[i] - hermite_value(spec_.nodes, params.lambda.lambda, u);
    acc += weight(i) * r * r;
  }
  return acc;
}

double ModelWorkspace::neg_log_lik(const ModelParams& params) const {
  const double s2 = params.sigma() * params.sigma();
  return 0.5 * w_total_ * std::log(kTwoPi * s2) + sse(params) / (2.0 * s2);
}

Eigen::VectorXd ModelWorkspace::sse_grad(const ModelParams& params) const {
  const int M = M_, p = p_;
  const Eigen::VectorXd& lam = params.lambda.lambda;
  Eigen::VectorXd grad_lambda = Eigen::VectorXd::Zero(M + 2);
  Eigen::VectorXd grad_beta = Eigen::VectorXd::Zero(p);

  for (int i = 0; i < data_.n(); ++i) {
    const GammaTable& tab = tables_[i];
    const double u = tab.gamma(params.beta);
    const int k = hermite_segment(spec_.nodes, u);
    const double w = spec_.nodes[k + 1] - spec_.nodes[k];
    const double t = (u - spec_.nodes[k]) / w;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    const double h01 = -2.0 * t3 + 3.0 * t2;
    const double f = h00 * lam[k] + h01 * lam[k + 1];
    const double gprime = 6.0 * (t - t2) * (lam[k + 1] - lam[k]) / w;
    const double c = -2.0 * weight(i) * (data_.y_obs[i] - f);

    grad_lambda[k] += c * h00;
    grad_lambda[k + 1] += c * h01;
    grad_beta.noalias() += (c * gprime) * tab.gamma_grad(params.beta);
  }

  // Chain from node heights to the unconstrained parameterization:
  // d lambda_m / d lambda0 = 1; d lambda_m / d l_j = s_j exp(l_j) for j <= m.
  Eigen::VectorXd grad(M + 2 + p);
  grad[0] = grad_lambda.sum();
  double tail = 0.0;
  for (int m = M + 1; m >= 1; --m) {
    tail += grad_lambda[m];
    grad[m] = tail * alternation_sign(params.heights.sign, m) *
              std::exp(params.heights.l[m - 1]);
  }
  grad.segment(M + 2, p) =
      squash_jacobian(params.y_warp).transpose() * grad_beta;
  return grad;
}

Eigen::VectorXd ModelWorkspace::loss_grad(const ModelParams& params) const {
  const double s2 = params.sigma() * params.sigma();
  Eigen::VectorXd grad(d_full());
  grad.head(d_mean()) = sse_grad(params) / (2.0 * s2);
  grad[d_full() - 1] = w_total_ - sse(params) / s2;
  return grad;
}

ModelParams ModelWorkspace::unpack_mean(const Eigen::VectorXd& z, SignSet sign,
                                        double log_sigma) const {
  return spcr::unpack_mean(z, M_, p_, sign, log_sigma);
}

ModelParams ModelWorkspace::unpack_full(const Eigen::VectorXd& z,
                                        SignSet sign) const {
  return spcr::unpack_full(z, M_, p_, sign);
}

}  // namespace spcr
