// Copyright 2026 The LPMC Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lpmc/entropy.hpp"

#include <array>
#include <cmath>

namespace lpmc {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

template <typename S>
S softplus_s(S x) {
  return x > S(20) ? x : std::log1p(std::exp(x));
}

template <typename S>
S sigmoid_s(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

// Per-channel activations of one evaluation of the density chain.
template <typename S>
struct ChainTrace {
  std::array<std::array<S, 3>, kFactorizedStages + 1> l{};  // stage inputs
  std::array<std::array<S, 3>, kFactorizedStages> u{};      // affine outputs
};

// Runs the chain for channel c at x; matrices are the softplus'd H.
template <typename S>
S run_chain(const std::vector<const S*>& m, const std::vector<const S*>& b, const std::vector<const S*>& ta,
            Index c, S x, ChainTrace<S>* trace) {
  std::array<S, 3> l{x, 0, 0};
  for (int k = 0; k < kFactorizedStages; ++k) {
    const int fi = kFactorizedFilters[k], fo = kFactorizedFilters[k + 1];
    if (trace) trace->l[static_cast<std::size_t>(k)] = l;
    std::array<S, 3> u{};
    for (int o = 0; o < fo; ++o) {
      S acc = b[static_cast<std::size_t>(k)][c * fo + o];
      for (int i = 0; i < fi; ++i) acc += m[static_cast<std::size_t>(k)][(c * fo + o) * fi + i] * l[static_cast<std::size_t>(i)];
      u[static_cast<std::size_t>(o)] = acc;
    }
    if (trace) trace->u[static_cast<std::size_t>(k)] = u;
    if (k + 1 < kFactorizedStages) {
      for (int o = 0; o < fo; ++o) {
        u[static_cast<std::size_t>(o)] += ta[static_cast<std::size_t>(k)][c * fo + o] * std::tanh(u[static_cast<std::size_t>(o)]);
      }
    }
    l = u;
  }
  return l[0];
}

}  // namespace

template <typename S>
Tensor<S> quantize_round(const Tensor<S>& v) {
  using T = Tensor<S>;
  typename T::Array out = v.value().unaryExpr([](S x) { return std::round(x); });
  auto vn = v.node_ptr();
  return T::make_result(v.shape(), std::move(out), {&v},
                        [vn](typename T::Node& o) { vn->grad_buffer() += o.grad; });
}

template <typename S>
Tensor<S> quantize_noise(const Tensor<S>& v, const typename Tensor<S>::Array& u) {
  if (u.size() != v.numel()) throw_shape("quantize_noise", "noise size does not match " + shape_str(v.shape()));
  return add_constant(v, u);
}

template <typename S>
typename Tensor<S>::Array uniform_noise(Index n, Rng& rng) {
  typename Tensor<S>::Array u(n);
  for (Index i = 0; i < n; ++i) u[i] = static_cast<S>(rng.uniform() - 0.5);
  return u;
}

template <typename S>
Tensor<S> quantize(const Tensor<S>& v, QuantMode mode, Rng& rng) {
  if (mode == QuantMode::kRound) return quantize_round(v);
  return quantize_noise(v, uniform_noise<S>(v.numel(), rng));
}

template <typename S>
Tensor<S> lower_bound(const Tensor<S>& v, S bound) {
  using T = Tensor<S>;
  typename T::Array out = v.value().max(bound);
  auto vn = v.node_ptr();
  return T::make_result(v.shape(), std::move(out), {&v}, [vn, bound](typename T::Node& o) {
    auto& g = vn->grad_buffer();
    for (Index i = 0; i < g.size(); ++i) {
      if (vn->value[i] >= bound || o.grad[i] < S(0)) g[i] += o.grad[i];
    }
  });
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double gaussian_pmf(double v, double mu, double sigma) {
  const double a = std::fabs(v - mu);
  return normal_cdf((0.5 - a) / sigma) - normal_cdf((-0.5 - a) / sigma);
}

template <typename S>
Tensor<S> gaussian_likelihood(const Tensor<S>& v, const Tensor<S>& mu, const Tensor<S>& sigma) {
  using T = Tensor<S>;
  if (v.shape() != mu.shape() || v.shape() != sigma.shape()) {
    throw_shape("gaussian_likelihood", shape_str(v.shape()) + " with " + shape_str(mu.shape()) + " / " +
                                           shape_str(sigma.shape()));
  }
  const Index n = v.numel();
  typename T::Array out(n);
  for (Index i = 0; i < n; ++i) {
    out[i] = static_cast<S>(gaussian_pmf(v.value()[i], mu.value()[i], sigma.value()[i]));
  }
  auto vn = v.node_ptr(), mn = mu.node_ptr(), sn = sigma.node_ptr();
  return T::make_result(v.shape(), std::move(out), {&v, &mu, &sigma}, [vn, mn, sn, n](typename T::Node& o) {
    for (Index i = 0; i < n; ++i) {
      const double t = static_cast<double>(vn->value[i]) - mn->value[i];
      const double sg = sn->value[i];
      const double a = std::fabs(t);
      const double zu = (0.5 - a) / sg, zl = (-0.5 - a) / sg;
      const double pu = normal_pdf(zu), pl = normal_pdf(zl);
      const double g = o.grad[i];
      const double d_a = (pl - pu) / sg;
      const double d_s = (-pu * zu + pl * zl) / sg;
      const double sgn = t > 0 ? 1.0 : (t < 0 ? -1.0 : 0.0);
      if (vn->requires_grad) vn->grad_buffer()[i] += static_cast<S>(g * sgn * d_a);
      if (mn->requires_grad) mn->grad_buffer()[i] -= static_cast<S>(g * sgn * d_a);
      if (sn->requires_grad) sn->grad_buffer()[i] += static_cast<S>(g * d_s);
    }
  });
}

template <typename S>
Tensor<S> rate_bits(const Tensor<S>& likelihood) {
  const S inv_ln2 = static_cast<S>(1.0 / std::log(2.0));
  return scale(sum(log(lower_bound(likelihood, static_cast<S>(kLikelihoodFloor)))), -inv_ln2);
}

template <typename S>
void init_factorized(ParamStore<S>& store, const std::string& prefix, Index channels, Rng& rng) {
  // Initial density is roughly uniform over [-5, 5], which leaves far less
  // than 1e-6 of mass outside the symbol support.
  const double init_scale = std::pow(5.0, 1.0 / (kFactorizedStages));
  for (int k = 0; k < kFactorizedStages; ++k) {
    const Index fi = kFactorizedFilters[k], fo = kFactorizedFilters[k + 1];
    const double h0 = std::log(std::expm1(1.0 / init_scale / static_cast<double>(fo)));
    store.add(prefix + ".H" + std::to_string(k), Tensor<S>::full({channels, fo, fi}, static_cast<S>(h0)));
    store.add(prefix + ".b" + std::to_string(k), init::uniform<S>({channels, fo}, 0.5, rng));
    if (k + 1 < kFactorizedStages) {
      store.add(prefix + ".a" + std::to_string(k), Tensor<S>::zeros({channels, fo}));
    }
  }
}

template <typename S>
FactorizedParams<S> factorized_params(const ParamStore<S>& store, const std::string& prefix) {
  FactorizedParams<S> p;
  for (int k = 0; k < kFactorizedStages; ++k) {
    p.h.push_back(store.get(prefix + ".H" + std::to_string(k)));
    p.b.push_back(store.get(prefix + ".b" + std::to_string(k)));
    if (k + 1 < kFactorizedStages) p.a.push_back(store.get(prefix + ".a" + std::to_string(k)));
  }
  return p;
}

template <typename S>
double factorized_logit(const FactorizedParams<S>& p, Index c, double x) {
  std::vector<Eigen::ArrayXd> m, ta;
  std::vector<Eigen::ArrayXd> b;
  std::vector<const double*> mp, bp, tp;
  for (int k = 0; k < kFactorizedStages; ++k) {
    m.push_back(p.h[static_cast<std::size_t>(k)].value().template cast<double>().unaryExpr(
        [](double v) { return softplus_s(v); }));
    b.push_back(p.b[static_cast<std::size_t>(k)].value().template cast<double>());
    if (k + 1 < kFactorizedStages) {
      ta.push_back(p.a[static_cast<std::size_t>(k)].value().template cast<double>().tanh());
    }
  }
  for (auto& a : m) mp.push_back(a.data());
  for (auto& a : b) bp.push_back(a.data());
  for (auto& a : ta) tp.push_back(a.data());
  return run_chain<double>(mp, bp, tp, c, x, nullptr);
}

template <typename S>
Tensor<S> factorized_likelihood(const Tensor<S>& v, const FactorizedParams<S>& p) {
  using T = Tensor<S>;
  using Array = typename T::Array;
  constexpr int K = kFactorizedStages;
  if (v.ndim() != 4 || v.dim(1) != p.channels()) {
    throw_shape("factorized_likelihood", shape_str(v.shape()) + " against " + std::to_string(p.channels()) +
                                             " channel density");
  }
  const Index channels = v.dim(1), plane = v.dim(2) * v.dim(3), n = v.numel();
  std::vector<Array> m, ta;
  for (int k = 0; k < K; ++k) {
    m.push_back(p.h[static_cast<std::size_t>(k)].value().unaryExpr([](S x) { return softplus_s(x); }));
    if (k + 1 < K) ta.push_back(p.a[static_cast<std::size_t>(k)].value().tanh());
  }
  std::vector<const S*> mp, bp, tp;
  for (auto& a : m) mp.push_back(a.data());
  for (const auto& t : p.b) bp.push_back(t.data());
  for (auto& a : ta) tp.push_back(a.data());

  Array out(n);
  std::vector<ChainTrace<S>> lower(static_cast<std::size_t>(n)), upper(static_cast<std::size_t>(n));
  std::vector<S> sign(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Index c = (i / plane) % channels;
    const std::size_t si = static_cast<std::size_t>(i);
    const S lo = run_chain<S>(mp, bp, tp, c, v.value()[i] - S(0.5), &lower[si]);
    const S up = run_chain<S>(mp, bp, tp, c, v.value()[i] + S(0.5), &upper[si]);
    // Evaluate in the tail where both sigmoids are small.
    sign[si] = lo + up > S(0) ? S(-1) : S(1);
    out[i] = std::abs(sigmoid_s(sign[si] * up) - sigmoid_s(sign[si] * lo));
  }

  auto vn = v.node_ptr();
  std::vector<std::shared_ptr<typename T::Node>> hn, bn, an;
  for (int k = 0; k < K; ++k) {
    hn.push_back(p.h[static_cast<std::size_t>(k)].node_ptr());
    bn.push_back(p.b[static_cast<std::size_t>(k)].node_ptr());
    if (k + 1 < K) an.push_back(p.a[static_cast<std::size_t>(k)].node_ptr());
  }
  auto backward = [=, lower = std::move(lower), upper = std::move(upper), sign = std::move(sign)](
                      typename T::Node& o) {
    // d(lik)/d(logit) at each end, then back through the chain.
    auto chain_back = [&](const ChainTrace<S>& tr, Index c, S g_out) -> S {
      std::array<S, 3> gl{g_out, 0, 0};
      for (int k = K - 1; k >= 0; --k) {
        const int fi = kFactorizedFilters[k], fo = kFactorizedFilters[k + 1];
        const auto& u = tr.u[static_cast<std::size_t>(k)];
        const auto& l = tr.l[static_cast<std::size_t>(k)];
        std::array<S, 3> gu{};
        for (int o2 = 0; o2 < fo; ++o2) {
          const std::size_t oi = static_cast<std::size_t>(o2);
          if (k + 1 < K) {
            const Index ai = c * fo + o2;
            const S tu = std::tanh(u[oi]);
            const S t_a = ta[static_cast<std::size_t>(k)][ai];
            gu[oi] = gl[oi] * (S(1) + t_a * (S(1) - tu * tu));
            if (an[static_cast<std::size_t>(k)]->requires_grad) {
              an[static_cast<std::size_t>(k)]->grad_buffer()[ai] += gl[oi] * tu * (S(1) - t_a * t_a);
            }
          } else {
            gu[oi] = gl[oi];
          }
        }
        std::array<S, 3> gprev{};
        const bool hgrad = hn[static_cast<std::size_t>(k)]->requires_grad;
        const bool bgrad = bn[static_cast<std::size_t>(k)]->requires_grad;
        for (int o2 = 0; o2 < fo; ++o2) {
          const std::size_t oi = static_cast<std::size_t>(o2);
          if (bgrad) bn[static_cast<std::size_t>(k)]->grad_buffer()[c * fo + o2] += gu[oi];
          for (int i2 = 0; i2 < fi; ++i2) {
            const Index hi = (c * fo + o2) * fi + i2;
            const S mval = m[static_cast<std::size_t>(k)][hi];
            gprev[static_cast<std::size_t>(i2)] += mval * gu[oi];
            if (hgrad) {
              const S hval = hn[static_cast<std::size_t>(k)]->value[hi];
              hn[static_cast<std::size_t>(k)]->grad_buffer()[hi] += gu[oi] * l[static_cast<std::size_t>(i2)] * sigmoid_s(hval);
            }
          }
        }
        gl = gprev;
      }
      return gl[0];
    };
    for (Index i = 0; i < n; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      const Index c = (i / plane) % channels;
      const S s = sign[si];
      const S lo = lower[si].u[K - 1][0], up = upper[si].u[K - 1][0];
      const S su = sigmoid_s(s * up), sl = sigmoid_s(s * lo);
      const S d = su - sl;
      const S sd = d > S(0) ? S(1) : (d < S(0) ? S(-1) : S(0));
      const S g = o.grad[i];
      const S g_up = g * sd * s * su * (S(1) - su);
      const S g_lo = -g * sd * s * sl * (S(1) - sl);
      const S gx = chain_back(upper[si], c, g_up) + chain_back(lower[si], c, g_lo);
      if (vn->requires_grad) vn->grad_buffer()[i] += gx;
    }
  };
  std::vector<const T*> inputs{&v};
  for (const auto& t : p.h) inputs.push_back(&t);
  for (const auto& t : p.b) inputs.push_back(&t);
  for (const auto& t : p.a) inputs.push_back(&t);
  T result(v.shape(), std::move(out));
  if (!grad_enabled()) return result;
  bool any = false;
  for (const T* t : inputs) any = any || t->requires_grad();
  if (!any) return result;
  auto* node = result.node();
  node->requires_grad = true;
  for (const T* t : inputs) {
    if (t->requires_grad()) node->parents.push_back(t->node_ptr());
  }
  node->backward_fn = std::move(backward);
  return result;
}

#define LPMC_INSTANTIATE(S)                                                                         \
  template Tensor<S> quantize_round(const Tensor<S>&);                                             \
  template Tensor<S> quantize_noise(const Tensor<S>&, const Tensor<S>::Array&);                    \
  template Tensor<S>::Array uniform_noise<S>(Index, Rng&);                                         \
  template Tensor<S> quantize(const Tensor<S>&, QuantMode, Rng&);                                  \
  template Tensor<S> lower_bound(const Tensor<S>&, S);                                             \
  template Tensor<S> gaussian_likelihood(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);    \
  template Tensor<S> rate_bits(const Tensor<S>&);                                                  \
  template void init_factorized(ParamStore<S>&, const std::string&, Index, Rng&);                  \
  template FactorizedParams<S> factorized_params(const ParamStore<S>&, const std::string&);        \
  template double factorized_logit(const FactorizedParams<S>&, Index, double);                     \
  template Tensor<S> factorized_likelihood(const Tensor<S>&, const FactorizedParams<S>&);

LPMC_INSTANTIATE(float)
LPMC_INSTANTIATE(double)

}  // namespace lpmc
