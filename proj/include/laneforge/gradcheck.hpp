#pragma once

// Finite-difference verification of analytic gradients. Meant to be run in
// 64-bit mode; the training dtype does not have the headroom for eps = 1e-5.

#include <functional>

#include "laneforge/tensor.hpp"

namespace laneforge {

struct GradCheckReport {
  double max_rel_err = 0.0;  // over coordinates kept
  int checked = 0;
  int excluded = 0;  // coordinates flagged non-smooth (kink straddles x +- eps)
};

/// Compares d f / d x against central differences coordinate by coordinate.
/// f must map a tensor to a scalar tensor and be evaluated on the given tape
/// context internally (a fresh tape is used per call). Coordinates where the
/// one-sided slopes disagree strongly are excluded as non-smooth points
/// (clamp or relu boundaries) rather than reported as gradient bugs.
template <class Real>
GradCheckReport finite_difference_check(const std::function<Tensor<Real>(const Tensor<Real>&)>& f,
                                        const Tensor<Real>& x, Real eps = Real(1e-5)) {
  Tensor<Real> var = x.clone_values();
  var.set_requires_grad(true);

  Tape<Real> tape;
  Tensor<Real> loss;
  {
    typename Tape<Real>::Scope scope(tape);
    loss = f(var);
    if (loss.size() != 1) throw ShapeError("finite_difference_check: f must be scalar-valued");
    tape.backward(loss);
  }

  auto eval = [&](const Tensor<Real>& point) {
    Tensor<Real> out = f(point);
    if (out.size() != 1) throw ShapeError("finite_difference_check: f must be scalar-valued");
    return (double)out.item();
  };

  GradCheckReport rep;
  Tensor<Real> probe = x.clone_values();
  for (long long i = 0; i < x.size(); ++i) {
    Real keep = probe.data()[i];
    probe.data()[i] = keep + eps;
    double fp = eval(probe);
    probe.data()[i] = keep - eps;
    double fm = eval(probe);
    probe.data()[i] = keep;
    double f0 = (double)loss.item();

    double central = (fp - fm) / (2.0 * (double)eps);
    double fwd = (fp - f0) / (double)eps;
    double bwd = (f0 - fm) / (double)eps;
    double slope_scale = std::max({1.0, std::abs(fwd), std::abs(bwd)});
    if (std::abs(fwd - bwd) > 0.05 * slope_scale) {
      ++rep.excluded;  // kink between x - eps and x + eps
      continue;
    }
    double analytic = (double)var.grad()[(std::size_t)i];
    double rel = std::abs(analytic - central) / std::max(1.0, std::abs(analytic));
    rep.max_rel_err = std::max(rep.max_rel_err, rel);
    ++rep.checked;
  }
  return rep;
}

}  // namespace laneforge
