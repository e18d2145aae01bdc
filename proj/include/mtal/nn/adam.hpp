#pragma once

#include <cmath>
#include <cstdint>

#include "mtal/nn/aae.hpp"

namespace mtal::nn {

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 5e-4;
  bool coupled_decay = false;  // true: wd * p joins the gradient (L2) instead of scaling p
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  AdamConfig config;
  AaeParams<Scalar> m, v;
  std::uint64_t step = 0;

  static AdamState for_params(const AaeParams<Scalar>& p, const AdamConfig& cfg = {}) {
    AdamState s;
    s.config = cfg;
    s.m = AaeParams<Scalar>::zeros(p.shape());
    s.v = AaeParams<Scalar>::zeros(p.shape());
    return s;
  }
};

/// One Adam update with bias correction. Decoupled weight decay scales
/// parameters by (1 - lr * wd) before the moment-based delta; coupled decay
/// adds wd * p to the gradient before the moments.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, AaeParams<Scalar>& params, const AaeParams<Scalar>& grads) {
  zip_tensors(
      [](const char* name, const auto& g) {
        // x * 0 is NaN exactly when x is not finite; a vectorized sum beats allFinite
        if (!((g.array() * Scalar(0)).sum() == Scalar(0))) throw Error(std::string("adam_step: non-finite gradient in ") + name);
      },
      grads);
  if (state.m.shape() != params.shape() || grads.shape() != params.shape()) {
    throw DimensionError("adam_step: state, parameter and gradient shapes differ");
  }
  const auto& c = state.config;
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const Scalar decay = static_cast<Scalar>(c.coupled_decay ? 1.0 : 1.0 - c.lr * c.weight_decay);
  const Scalar l2 = static_cast<Scalar>(c.coupled_decay ? c.weight_decay : 0.0);
  const Scalar b1 = static_cast<Scalar>(c.beta1), b2 = static_cast<Scalar>(c.beta2);
  const Scalar corr1 = static_cast<Scalar>(1.0 - std::pow(c.beta1, t));
  const Scalar corr2 = static_cast<Scalar>(1.0 - std::pow(c.beta2, t));
  const Scalar lr = static_cast<Scalar>(c.lr), eps = static_cast<Scalar>(c.eps);
  // one fused pass per tensor; same operation order as the textbook update
  zip_tensors(
      [&](const char*, auto& p, const auto& g, auto& m, auto& v) {
        // locals, so the stores below cannot alias the constants
        const Scalar kb1 = b1, kb2 = b2, kc1 = corr1, kc2 = corr2, klr = lr, keps = eps, kdecay = decay, kl2 = l2;
        Scalar* __restrict pd = p.data();
        const Scalar* __restrict gd = g.data();
        Scalar* __restrict md = m.data();
        Scalar* __restrict vd = v.data();
        const Index n = p.size();
        for (Index i = 0; i < n; ++i) {
          const Scalar gi = gd[i] + kl2 * pd[i];
          const Scalar mi = kb1 * md[i] + (Scalar(1) - kb1) * gi;
          const Scalar vi = kb2 * vd[i] + (Scalar(1) - kb2) * (gi * gi);
          md[i] = mi;
          vd[i] = vi;
          pd[i] = pd[i] * kdecay - klr * (mi / kc1) / (std::sqrt(vi / kc2) + keps);
        }
      },
      params, grads, state.m, state.v);
  ++params.version;
}

}  // namespace mtal::nn
