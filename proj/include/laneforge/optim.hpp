#pragma once

// Parameter update rules (SGD with momentum, Adam, RAdam) and the per-epoch
// exponential learning-rate decay. The stateless step functions operate on
// raw buffers so they can be tested in isolation; Optimizer owns the moment
// state for a parameter set.

#include <cmath>
#include <string>
#include <vector>

#include "laneforge/common.hpp"

namespace laneforge {

enum class OptimKind { sgd, adam, radam };

inline OptimKind optim_kind_from(const std::string& s) {
  if (s == "sgd") return OptimKind::sgd;
  if (s == "adam") return OptimKind::adam;
  if (s == "radam") return OptimKind::radam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

inline const char* optim_kind_name(OptimKind k) {
  switch (k) {
    case OptimKind::sgd: return "sgd";
    case OptimKind::adam: return "adam";
    default: return "radam";
  }
}

template <class Real>
struct OptimState {
  OptimKind kind = OptimKind::radam;
  Real lr0 = Real(0.001);
  Real lr = Real(0.001);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);
  Real momentum = Real(0.9);
  Real decay = Real(0.95);
  long long t = 0;  // completed steps
};

/// v <- momentum v + g;  p <- p - lr v
template <class Real>
void sgd_step(Real* p, const Real* g, Real* v, std::size_t n, const OptimState<Real>& st) {
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = st.momentum * v[i] + g[i];
    p[i] -= st.lr * v[i];
  }
}

/// Bias-corrected Adam. st.t must already count this step (1-based).
template <class Real>
void adam_step(Real* p, const Real* g, Real* m, Real* v, std::size_t n, const OptimState<Real>& st) {
  Real c1 = Real(1) - std::pow(st.beta1, (Real)st.t);
  Real c2 = Real(1) - std::pow(st.beta2, (Real)st.t);
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = st.beta1 * m[i] + (Real(1) - st.beta1) * g[i];
    v[i] = st.beta2 * v[i] + (Real(1) - st.beta2) * g[i] * g[i];
    Real mh = m[i] / c1;
    Real vh = v[i] / c2;
    p[i] -= st.lr * mh / (std::sqrt(vh) + st.eps);
  }
}

/// Variance-rectification term of RAdam at step t; returns whether the
/// adaptive branch is active and the rectification factor r_t.
template <class Real>
std::pair<bool, Real> radam_rectifier(long long t, Real beta2) {
  Real rho_inf = Real(2) / (Real(1) - beta2) - Real(1);
  Real b2t = std::pow(beta2, (Real)t);
  Real rho_t = rho_inf - Real(2) * (Real)t * b2t / (Real(1) - b2t);
  if (rho_t > Real(4)) {
    Real r = std::sqrt(((rho_t - 4) * (rho_t - 2) * rho_inf) / ((rho_inf - 4) * (rho_inf - 2) * rho_t));
    return {true, r};
  }
  return {false, Real(1)};
}

template <class Real>
void radam_step(Real* p, const Real* g, Real* m, Real* v, std::size_t n, const OptimState<Real>& st) {
  Real c1 = Real(1) - std::pow(st.beta1, (Real)st.t);
  Real c2 = Real(1) - std::pow(st.beta2, (Real)st.t);
  auto [adaptive, r] = radam_rectifier<Real>(st.t, st.beta2);
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = st.beta1 * m[i] + (Real(1) - st.beta1) * g[i];
    v[i] = st.beta2 * v[i] + (Real(1) - st.beta2) * g[i] * g[i];
    Real mh = m[i] / c1;
    if (adaptive) {
      Real vh = v[i] / c2;
      p[i] -= st.lr * r * mh / (std::sqrt(vh) + st.eps);
    } else {
      p[i] -= st.lr * mh;
    }
  }
}

/// lr <- lr0 * d^epoch, epoch >= 1.
template <class Real>
void lr_decay(OptimState<Real>& st, int epoch) {
  if (!(st.decay > Real(0) && st.decay <= Real(1))) throw ConfigError("lr decay factor must lie in (0,1]");
  if (epoch < 1) throw ConfigError("lr_decay epoch must be >= 1");
  st.lr = st.lr0 * std::pow(st.decay, (Real)epoch);
}

/// Owns per-parameter moment buffers; parameters are registered in a fixed
/// order so updates are reproducible.
template <class Real>
class Optimizer {
 public:
  explicit Optimizer(OptimState<Real> st) : st_(st) {}

  OptimState<Real>& state() { return st_; }
  const OptimState<Real>& state() const { return st_; }

  void register_buffers(const std::vector<std::size_t>& sizes) {
    m_.clear();
    v_.clear();
    for (std::size_t n : sizes) {
      m_.emplace_back(n, Real(0));
      v_.emplace_back(n, Real(0));
    }
  }

  /// One update over the registered parameter list. grads[i] may be null to
  /// skip a parameter (treated as zero gradient with zero moment update
  /// skipped entirely).
  void step(const std::vector<Real*>& params, const std::vector<const Real*>& grads,
            const std::vector<std::size_t>& sizes) {
    if (params.size() != m_.size()) throw ConfigError("optimizer buffers not registered for this parameter set");
    ++st_.t;
    for (std::size_t i = 0; i < params.size(); ++i) {
      switch (st_.kind) {
        case OptimKind::sgd:
          sgd_step(params[i], grads[i], m_[i].data(), sizes[i], st_);
          break;
        case OptimKind::adam:
          adam_step(params[i], grads[i], m_[i].data(), v_[i].data(), sizes[i], st_);
          break;
        case OptimKind::radam:
          radam_step(params[i], grads[i], m_[i].data(), v_[i].data(), sizes[i], st_);
          break;
      }
    }
  }

  void apply_epoch_decay(int epoch) { lr_decay(st_, epoch); }

 private:
  OptimState<Real> st_;
  std::vector<std::vector<Real>> m_, v_;
};

}  // namespace laneforge
