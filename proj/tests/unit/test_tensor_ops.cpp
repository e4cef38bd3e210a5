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

#include <gtest/gtest.h>

#include "support/op_cases.hpp"

namespace lpmc {
namespace {

using testing::TD;

TD make(const Shape& shape, std::vector<double> values) {
  TD::Array a(static_cast<Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) a[static_cast<Index>(i)] = values[i];
  return TD(shape, std::move(a));
}

// Direct-loop convolution used as an oracle for the Eigen kernel.
TD naive_conv(const TD& x, const TD& w, const TD& b, Index stride, Index pad) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index o = w.dim(0), k = w.dim(2);
  const Index oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  TD::Array out = TD::Array::Zero(n * o * oh * ow);
  for (Index in = 0; in < n; ++in)
    for (Index oc = 0; oc < o; ++oc)
      for (Index y = 0; y < oh; ++y)
        for (Index xx = 0; xx < ow; ++xx) {
          double acc = b.defined() ? b.value()[oc] : 0.0;
          for (Index ic = 0; ic < c; ++ic)
            for (Index ky = 0; ky < k; ++ky)
              for (Index kx = 0; kx < k; ++kx) {
                const Index sy = y * stride + ky - pad, sx = xx * stride + kx - pad;
                if (sy < 0 || sx < 0 || sy >= h || sx >= wd) continue;
                acc += x.value()[((in * c + ic) * h + sy) * wd + sx] * w.value()[((oc * c + ic) * k + ky) * k + kx];
              }
          out[((in * o + oc) * oh + y) * ow + xx] = acc;
        }
  return TD({n, o, oh, ow}, std::move(out));
}

TEST(Tensor, SquareGradient) {
  TD x = make({1}, {3.0});
  x.set_requires_grad(true);
  backward(square(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Tensor, GradientsAccumulateUntilZeroed) {
  TD x = make({1}, {3.0});
  x.set_requires_grad(true);
  backward(square(x));
  backward(square(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
  x.zero_grad();
  backward(square(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Tensor, SoftmaxSumHasZeroGradient) {
  TD x = make({4}, {0.3, -1.0, 2.0, 0.5});
  x.set_requires_grad(true);
  backward(sum(softmax(x)));
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(x.grad()[i], 0.0, 1e-12);
}

TEST(Tensor, NonScalarBackwardRejected) {
  TD x = make({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  EXPECT_THROW(backward(square(x)), ShapeError);
}

TEST(Tensor, DiamondGraphVisitsEachNodeOnce) {
  TD x = make({1}, {2.0});
  x.set_requires_grad(true);
  TD y = square(x);
  backward(sum(add(y, y)));  // d/dx 2x² = 4x
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

TEST(Tensor, NoGradGuardRecordsNothing) {
  TD x = make({1}, {2.0});
  x.set_requires_grad(true);
  NoGradGuard guard;
  EXPECT_FALSE(square(x).requires_grad());
}

TEST(Tensor, ReplayIsBitIdentical) {
  Rng rng(5);
  TD w = testing::random_tensor({2, 3, 3, 3}, rng);
  TD x = testing::random_tensor({1, 3, 6, 6}, rng);
  w.set_requires_grad(true);
  testing::Projection proj;
  backward(proj(gelu(conv2d(x, w, TD(), 1, 1))));
  TD::Array first = w.grad();
  w.zero_grad();
  backward(proj(gelu(conv2d(x, w, TD(), 1, 1))));
  EXPECT_TRUE((first == w.grad()).all());
}

TEST(Tensor, ReshapePermuteRoundTrip) {
  Rng rng(1);
  TD x = testing::random_tensor({2, 3, 4}, rng);
  TD back = permute(permute(reshape(reshape(x, {6, 4}), {2, 3, 4}), {2, 0, 1}), {1, 2, 0});
  EXPECT_TRUE((back.value() == x.value()).all());
  EXPECT_EQ(back.shape(), x.shape());
}

TEST(Ops, ConvExamples) {
  TD ones({1, 1, 4, 4}, TD::Array::Ones(16));
  TD out = conv2d(ones, TD({1, 1, 2, 2}, TD::Array::Ones(4)), TD({1}, TD::Array::Zero(1)), 2, 0);
  ASSERT_EQ(out.shape(), (Shape{1, 1, 2, 2}));
  for (Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(out.value()[i], 4.0);

  TD scaled = conv2d(make({1, 1, 2, 2}, {1, 2, 3, 4}), make({1, 1, 1, 1}, {2}), TD(), 1, 0);
  EXPECT_EQ(std::vector<double>(scaled.value().begin(), scaled.value().end()), (std::vector<double>{2, 4, 6, 8}));
}

TEST(Ops, ConvMatchesDirectLoops) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Index k = 1 + static_cast<Index>(rng.below(3)), s = 1 + static_cast<Index>(rng.below(2));
    const Index p = static_cast<Index>(rng.below(static_cast<std::uint64_t>(k)));
    TD x = testing::random_tensor({2, 3, 7, 6}, rng);
    TD w = testing::random_tensor({4, 3, k, k}, rng);
    TD b = testing::random_tensor({4}, rng);
    TD got = conv2d(x, w, b, s, p), want = naive_conv(x, w, b, s, p);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LT((got.value() - want.value()).abs().maxCoeff(), 1e-12);
  }
}

TEST(Ops, ConvRejectsChannelMismatch) {
  TD x({1, 3, 4, 4}, TD::Array::Zero(48));
  TD w({2, 2, 3, 3}, TD::Array::Zero(36));
  EXPECT_THROW(conv2d(x, w, TD(), 1, 1), ShapeError);
}

TEST(Ops, DeconvStampsKernel) {
  TD out = deconv2d(make({1, 1, 1, 1}, {1}), TD({1, 1, 2, 2}, TD::Array::Ones(4)), TD(), 2, 0);
  ASSERT_EQ(out.shape(), (Shape{1, 1, 2, 2}));
  for (Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(out.value()[i], 1.0);
}

TEST(Ops, DeconvIsAdjointOfConv) {
  // <conv(x), y> = <x, deconv(y)> for the same weights and geometry; the
  // input extent leaves no remainder so no output padding is needed.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 100);
    TD w = testing::random_tensor({3, 2, 3, 3}, rng);  // conv: 2 → 3
    TD x = testing::random_tensor({1, 2, 7, 7}, rng);
    TD cx = conv2d(x, w, TD(), 2, 1);
    TD y = testing::random_tensor(cx.shape(), rng);
    TD dy = deconv2d(y, w, TD(), 2, 1);
    ASSERT_EQ(dy.dim(2), 7);  // (4 − 1)·2 − 2 + 3
    double lhs = (cx.value() * y.value()).sum();
    double rhs = 0;
    for (Index c = 0; c < 2; ++c)
      for (Index r = 0; r < 7; ++r)
        for (Index q = 0; q < 7; ++q) rhs += x.value()[(c * 7 + r) * 7 + q] * dy.value()[(c * 7 + r) * 7 + q];
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(Ops, DeconvGradientIsConvOfCotangent) {
  Rng rng(9);
  TD w = testing::random_tensor({2, 3, 4, 4}, rng);  // deconv: 2 → 3
  TD x = testing::random_tensor({1, 2, 3, 3}, rng);
  x.set_requires_grad(true);
  TD out = deconv2d(x, w, TD(), 2, 1);
  TD cot = testing::random_tensor(out.shape(), rng);
  backward(sum(mul(out, cot)));
  TD want = conv2d(cot, w, TD(), 2, 1);
  EXPECT_LT((x.grad() - want.value()).abs().maxCoeff(), 1e-12);
}

TEST(Ops, MaxPoolExamples) {
  TD x = make({1, 1, 2, 2}, {1, 2, 3, 4});
  x.set_requires_grad(true);
  TD out = maxpool2d(x, 2, 2, 0);
  ASSERT_EQ(out.numel(), 1);
  EXPECT_DOUBLE_EQ(out.value()[0], 4.0);
  backward(sum(out));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{0, 0, 0, 1}));

  TD c({1, 1, 5, 4}, TD::Array::Constant(20, 0.7));
  TD same = maxpool2d(c, 3, 1, 1);
  EXPECT_EQ(same.shape(), c.shape());
  EXPECT_TRUE((same.value() == 0.7).all());
}

TEST(Ops, MaxPoolTiesRouteToFirst) {
  TD x({1, 1, 2, 2}, TD::Array::Constant(4, 1.0));
  x.set_requires_grad(true);
  backward(sum(maxpool2d(x, 2, 2, 0)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{1, 0, 0, 0}));
}

TEST(Ops, CoreMathExamples) {
  TD s = softmax(make({3}, {0, 0, 0}));
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(s.value()[i], 1.0 / 3, 1e-15);

  Rng rng(3);
  TD a = testing::random_tensor({2, 5}, rng);
  TD eye = make({2, 2}, {1, 0, 0, 1});
  EXPECT_TRUE((matmul(eye, a).value() == a.value()).all());

  TD ln = layer_norm(TD({1, 6}, TD::Array::Constant(6, 2.5)), TD({6}, TD::Array::Ones(6)), TD({6}, TD::Array::Zero(6)));
  EXPECT_TRUE((ln.value() == 0.0).all());

  TD rows = softmax(testing::random_tensor({7, 9}, rng, -20, 20));
  for (Index r = 0; r < 7; ++r) EXPECT_NEAR(rows.value().segment(r * 9, 9).sum(), 1.0, 1e-6);
}

TEST(Ops, NonConformingShapesRejected) {
  Rng rng(2);
  EXPECT_THROW(add(testing::random_tensor({2, 3}, rng), testing::random_tensor({3, 2}, rng)), ShapeError);
  EXPECT_THROW(matmul(testing::random_tensor({2, 3}, rng), testing::random_tensor({2, 3}, rng)), ShapeError);
  EXPECT_THROW(reshape(testing::random_tensor({2, 3}, rng), {4, 2}), ShapeError);
}

// A few seeds per op here; the acceptance run covers 100.
class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST(GradCheck, KinksAreRedrawnButWrongGradientsFail) {
  ParamStore<double> store;
  // Every other entry sits 2e-6 from the kink of |p - c|.
  TD::Array v(40), c(40);
  for (Index i = 0; i < 40; ++i) {
    c[i] = 0.1 * static_cast<double>(i) - 2.0;
    v[i] = c[i] + (i % 2 ? 2e-6 : 0.5);
  }
  store.add("p", TD({40}, v));
  TD& p = store.get("p");
  auto kinked = [&] { return sum(abs(add_constant(p, -c))); };
  Rng rng(1);
  int kinks = 0;
  auto rep = testing::grad_check_params(store, kinked, rng, 30, &kinks);
  EXPECT_EQ(rep.checked, 30);
  EXPECT_LE(rep.max_err, testing::kFdTol);
  EXPECT_GT(kinks, 5);
  // Without the detector the straddling draws fail.
  EXPECT_GT(testing::grad_check_params(store, kinked, rng, 30).max_err, 0.1);

  // Smooth function whose tape misses a term: the detector must not hide it.
  auto wrong = [&] { return add(sum(square(p)), TD::scalar(0.3 * p.value().sum())); };
  kinks = 0;
  rep = testing::grad_check_params(store, wrong, rng, 30, &kinks);
  EXPECT_EQ(kinks, 0);
  EXPECT_GT(rep.max_err, 0.05);
}

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const auto cases = testing::op_cases();
  const auto& c = cases[GetParam()];
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto rep = c.run(seed);
    EXPECT_LE(rep.max_err, testing::kFdTol) << c.name << " seed " << seed << ": " << rep.where;
    EXPECT_GT(rep.checked, 0);
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range<std::size_t>(0, testing::op_cases().size()),
                         [](const auto& info) { return testing::op_cases()[info.param].name; });

}  // namespace
}  // namespace lpmc
