#pragma once

// Fine-tuning loss family: weighted cross entropy, the customized PolyLoss,
// focal loss, and the truncated Taylor series used to verify the PolyLoss
// derivation. Tape versions operate on the lane-probability map (channel 1
// of the two-channel softmax); probabilities are clamped before any log.

#include <vector>

#include "laneforge/tensor.hpp"

namespace laneforge {

struct LossConfig {
  double alpha = 1.0;   // PolyLoss / focal scale
  double gamma = 1.0;   // PolyLoss leading-polynomial perturbation
  double epsilon = 1.0; // focal modulation exponent
  double omega1 = 1.0;  // lane class weight (weighted CE)
  double omega0 = 1.0;  // background class weight (weighted CE)
  double prob_clamp = 1e-7;

  void validate() const {
    if (alpha < 0 || gamma < 0 || epsilon < 0) throw DomainError("loss hyperparameters must be nonnegative");
    if (omega1 <= 0 || omega0 <= 0) throw DomainError("class weights must be positive");
  }
};

namespace detail {

template <class Real>
void check_prob_label(const Tensor<Real>& probs, const Tensor<Real>& labels) {
  if (!same_shape(probs.shape(), labels.shape()))
    throw ShapeError("loss operands " + shape_str(probs.shape()) + " vs " + shape_str(labels.shape()));
}

}  // namespace detail

/// Weighted binary cross entropy over a lane-probability map.
/// -(1/T) sum_i [w1 y_i ln h_i + w0 (1 - y_i) ln(1 - h_i)]
template <class Real>
Tensor<Real> weighted_ce(const Tensor<Real>& probs, const Tensor<Real>& labels, const LossConfig& cfg) {
  cfg.validate();
  detail::check_prob_label(probs, labels);
  Real lo = (Real)cfg.prob_clamp, hi = Real(1) - (Real)cfg.prob_clamp;
  auto h = clamp(probs, lo, hi);
  auto pos = mul(mul(labels, log(h)), (Real)cfg.omega1);
  auto one_minus_y = sub(Tensor<Real>(labels.shape(), Real(1)), labels);
  auto negpart = mul(mul(one_minus_y, log(sub(Tensor<Real>(h.shape(), Real(1)), h))), (Real)cfg.omega0);
  return neg(mean(add(pos, negpart)));
}

/// Customized PolyLoss for binary segmentation:
/// -(1/T) sum_i ( a [ y (1-h)^e ln h + (1-y) h^e ln(1-h) ]
///              - g [ y (1-h)^(e+1) + (1-y) h^(e+1) ] )
template <class Real>
Tensor<Real> poly_loss(const Tensor<Real>& probs, const Tensor<Real>& labels, const LossConfig& cfg) {
  cfg.validate();
  detail::check_prob_label(probs, labels);
  Real lo = (Real)cfg.prob_clamp, hi = Real(1) - (Real)cfg.prob_clamp;
  Real a = (Real)cfg.alpha, g = (Real)cfg.gamma, e = (Real)cfg.epsilon;
  auto h = clamp(probs, lo, hi);
  Tensor<Real> ones(h.shape(), Real(1));
  auto hb = sub(ones, h);            // 1 - h
  auto y = labels;
  auto yb = sub(Tensor<Real>(labels.shape(), Real(1)), labels);  // 1 - y

  auto ce_part = add(mul(mul(y, pow(hb, e)), log(h)), mul(mul(yb, pow(h, e)), log(hb)));
  auto poly_part = add(mul(y, pow(hb, e + Real(1))), mul(yb, pow(h, e + Real(1))));
  return neg(mean(sub(mul(ce_part, a), mul(poly_part, g))));
}

/// Focal loss: -(1/T) sum a (1 - Q)^e ln Q where Q is the probability of the
/// true class per pixel.
template <class Real>
Tensor<Real> focal_loss(const Tensor<Real>& probs, const Tensor<Real>& labels, Real alpha, Real epsilon) {
  if (alpha < 0 || epsilon < 0) throw DomainError("focal hyperparameters must be nonnegative");
  detail::check_prob_label(probs, labels);
  Real lo = Real(1e-7), hi = Real(1) - Real(1e-7);
  auto y = labels;
  auto yb = sub(Tensor<Real>(labels.shape(), Real(1)), labels);
  auto hbar = sub(Tensor<Real>(probs.shape(), Real(1)), probs);
  auto q = clamp(add(mul(y, probs), mul(yb, hbar)), lo, hi);
  auto qb = sub(Tensor<Real>(q.shape(), Real(1)), q);
  return neg(mean(mul(mul(pow(qb, epsilon), log(q)), alpha)));
}

// ---------------------------------------------------------------------------
// Scalar derivation utilities
// ---------------------------------------------------------------------------

/// Truncated Taylor expansion of the focal loss around Q = 1:
/// sum_{j=1..N} (gamma_j + 1/j) (1-Q)^(j+eps).
/// With all gamma_j = 0 this is the N-term truncation of -(1-Q)^eps ln Q.
inline double fl_taylor_truncated(double q, double eps, int n, const std::vector<double>& gammas) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("fl_taylor_truncated requires Q in (0,1)");
  if (n < 1) throw DomainError("fl_taylor_truncated requires N >= 1");
  double u = 1.0 - q;
  double s = 0.0;
  for (int j = 1; j <= n; ++j) {
    double g = (j - 1 < (int)gammas.size()) ? gammas[(size_t)j - 1] : 0.0;
    s += (g + 1.0 / j) * std::pow(u, j + eps);
  }
  return s;
}

/// Simplified single-coefficient PolyLoss of the focal loss:
/// -a (1-Q)^e ln Q + g (1-Q)^(e+1).
inline double poly_loss_scalar(double q, double alpha, double gamma, double eps) {
  double u = 1.0 - q;
  return -alpha * std::pow(u, eps) * std::log(q) + gamma * std::pow(u, eps + 1.0);
}

/// Inverse-pixel-frequency class weights normalized to mean 1 over the two
/// classes. lane_fraction is the share of lane pixels in the training split.
inline std::pair<double, double> inverse_frequency_weights(double lane_fraction) {
  if (!(lane_fraction > 0.0 && lane_fraction < 1.0))
    throw DomainError("lane fraction must lie strictly inside (0,1)");
  double w1 = 1.0 / lane_fraction;
  double w0 = 1.0 / (1.0 - lane_fraction);
  double m = (w1 + w0) / 2.0;
  return {w1 / m, w0 / m};
}

}  // namespace laneforge
