#ifndef SPCR_MODEL_HPP
#define SPCR_MODEL_HPP

#include <vector>

#include <Eigen/Core>

#include "spcr/diffeo.hpp"
#include "spcr/template_fn.hpp"

namespace spcr {

/// Affine map between the user covariate scale and the internal [0,1] domain:
/// x_internal = (x_user - shift) / scale.
struct Affine {
  double shift = 0.0;
  double scale = 1.0;

  double to_internal(double x) const { return (x - shift) / scale; }
  double to_user(double t) const { return shift + scale * t; }
};

/// Paired covariate/response samples. The affine map is min-max with a 0.1%
/// interior margin so mapped covariates never touch the endpoints of [0,1].
struct Dataset {
  Eigen::VectorXd x_raw;
  Eigen::VectorXd y_obs;
  Affine affine;
  Eigen::VectorXd x;  // cached internal-scale covariates

  int n() const { return static_cast<int>(x_raw.size()); }

  /// Builds the margin affine map from the sample range; throws DataError when
  /// the covariate is degenerate (constant).
  static Dataset from_xy(Eigen::VectorXd x_user, Eigen::VectorXd y);
};

/// Full parameter bundle in unconstrained coordinates with derived constrained
/// views cached at construction.
struct ModelParams {
  UnconstrainedHeights heights;
  Eigen::VectorXd y_warp;
  double log_sigma = 0.0;
  BasisCoefficients beta;  // squash(y_warp)
  HeightVector lambda;     // heights_reconstruct(heights)

  ModelParams(UnconstrainedHeights h, Eigen::VectorXd y, double ls);

  double sigma() const { return std::exp(log_sigma); }
  int p() const { return static_cast<int>(y_warp.size()); }
  int M() const { return heights.M(); }
};

/// Unconstrained coordinate layout used throughout estimation and sampling:
///   z = [lambda0, l_0..l_M, y_1..y_p, log_sigma]
/// The sse objective uses the leading d_mean = (M+2) + p coordinates; the
/// posterior appends log_sigma for d_full = d_mean + 1.
Eigen::VectorXd pack_full(const ModelParams& params);
Eigen::VectorXd pack_mean(const ModelParams& params);
ModelParams unpack_full(const Eigen::VectorXd& z, int M, int p, SignSet sign);
ModelParams unpack_mean(const Eigen::VectorXd& z, int M, int p, SignSet sign,
                        double log_sigma);

/// f(x) = g_lambda(gamma_beta(x)) on the internal scale.
double predict(const ModelParams& params, const TemplateSpec& spec, double x);

double sse(const ModelParams& params, const TemplateSpec& spec,
           const Dataset& data);

/// n/2 log(2 pi sigma^2) + sse / (2 sigma^2).
double neg_log_lik(const ModelParams& params, const TemplateSpec& spec,
                   const Dataset& data);

/// Analytic gradient of neg_log_lik over [heights, y_warp, log_sigma].
Eigen::VectorXd loss_grad(const ModelParams& params, const TemplateSpec& spec,
                          const Dataset& data);

/// Internal-scale stationary points (gamma_inverse of each interior node),
/// strictly ascending.
Eigen::VectorXd stationary_points(const ModelParams& params,
                                  const TemplateSpec& spec, double tol = 1e-10);

/// Precomputed per-point trig tables shared by every likelihood evaluation on
/// a fixed dataset; immutable after construction and safe to share across
/// threads. This is the estimation/sampling hot path.
class ModelWorkspace {
 public:
  ModelWorkspace(const Dataset& data, const TemplateSpec& spec, int p);

  /// Weighted variant: weights scale each point's squared residual (and the
  /// likelihood's effective sample size), as in weighted-likelihood refits.
  /// Weights must be positive and finite; an empty vector means all ones.
  ModelWorkspace(const Dataset& data, const TemplateSpec& spec, int p,
                 Eigen::VectorXd weights);

  int d_mean() const { return M_ + 2 + p_; }
  int d_full() const { return d_mean() + 1; }
  int p() const { return p_; }
  int M() const { return M_; }
  const Dataset& data() const { return data_; }
  const TemplateSpec& spec() const { return spec_; }

  void predict_all(const ModelParams& params, Eigen::VectorXd& out) const;
  double sse(const ModelParams& params) const;
  double neg_log_lik(const ModelParams& params) const;

  /// Gradient of sse over the mean coordinates (d_mean).
  Eigen::VectorXd sse_grad(const ModelParams& params) const;

  /// Gradient of neg_log_lik over all coordinates (d_full).
  Eigen::VectorXd loss_grad(const ModelParams& params) const;

  ModelParams unpack_mean(const Eigen::VectorXd& z, SignSet sign,
                          double log_sigma = 0.0) const;
  ModelParams unpack_full(const Eigen::VectorXd& z, SignSet sign) const;

 private:
  double weight(int i) const { return w_.size() > 0 ? w_[i] : 1.0; }

  Dataset data_;
  TemplateSpec spec_;
  int p_;
  int M_;
  Eigen::VectorXd w_;      // empty = unweighted
  double w_total_ = 0.0;   // sum of weights (= n when unweighted)
  std::vector<GammaTable> tables_;
};

}  // namespace spcr

#endif
