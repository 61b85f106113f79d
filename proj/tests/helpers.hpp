#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "halo/autodiff.hpp"
#include "halo/rng.hpp"

namespace halo::test {

inline Tensor random_tensor(std::vector<int> dims, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(dims));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// |a - n| / max(1, |a|, |n|): relative for large gradients, absolute near 0.
inline double grad_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

// Central-difference check of d(loss)/d(every parameter in ps). The builder
// must construct the scalar loss from a fresh tape each call.
inline double gradcheck_params(ad::ParamStore& ps,
                               const std::function<ad::Var(ad::Tape&)>& build,
                               double step = 1e-3) {
  ps.zero_grad();
  std::vector<Tensor> analytic;
  {
    ad::Tape t(&ps);
    t.backward(build(t));
  }
  analytic.reserve(ps.entries.size());
  for (auto& e : ps.entries) analytic.push_back(e.grad);

  auto eval = [&]() {
    ad::Tape t(&ps);
    return t.val(build(t))[0];
  };

  double worst = 0.0;
  for (size_t p = 0; p < ps.entries.size(); ++p) {
    auto& e = ps.entries[p];
    for (int64_t i = 0; i < e.value.size(); ++i) {
      const double orig = e.value[i];
      e.value[i] = orig + step;
      const double fp = eval();
      e.value[i] = orig - step;
      const double fm = eval();
      e.value[i] = orig;
      worst = std::max(worst, grad_err(analytic[p][i], (fp - fm) / (2.0 * step)));
    }
  }
  return worst;
}

// Same, for the gradient w.r.t. one input tensor. The builder receives the
// input as a tracked leaf. ps may be null when the builder uses no params.
inline double gradcheck_input(Tensor& x,
                              const std::function<ad::Var(ad::Tape&, ad::Var)>& build,
                              ad::ParamStore* ps = nullptr, double step = 1e-3) {
  Tensor analytic;
  {
    ad::Tape t(ps);
    ad::Var xv = t.input(x);
    t.backward(build(t, xv));
    analytic = t.grad(xv);
  }
  auto eval = [&]() {
    ad::Tape t(ps);
    ad::Var xv = t.input(x);
    return t.val(build(t, xv))[0];
  };
  double worst = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = eval();
    x[i] = orig - step;
    const double fm = eval();
    x[i] = orig;
    worst = std::max(worst, grad_err(analytic[i], (fp - fm) / (2.0 * step)));
  }
  return worst;
}

}  // namespace halo::test
