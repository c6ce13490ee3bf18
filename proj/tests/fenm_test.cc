#include <gtest/gtest.h>

#include "ilic/fenm.h"
#include "test_util.h"

namespace ilic {
namespace {

using testing::grad_check;
using testing::project;
using testing::random_tensor;
using testing::zero_params;

std::vector<Tensor> params_of(const ParamStore& ps) {
  std::vector<Tensor> out;
  for (const auto& [_, t] : ps) out.push_back(t);
  return out;
}

TEST(DenseBlockTest, ZeroWeightsAndBookkeeping) {
  Rng rng(1);
  ParamStore ps;
  DenseBlock db(ps, "db", 6, 8, 3, rng);
  EXPECT_EQ(db.layers.size(), 3u);
  EXPECT_EQ(db.layers[2].weight.dim(1), 6u + 16u);
  EXPECT_EQ(db.fuse.weight.shape(), (Shape{6, 6 + 24, 1, 1}));
  zero_params(ps);
  Tensor x = random_tensor({6, 5, 5}, rng);
  Tensor y = db(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.at(i), x.at(i));
  EXPECT_THROW(DenseBlock(ps, "bad", 6, 0, 3, rng), Error);
}

TEST(DenseBlockTest, Gradient) {
  Rng rng(2);
  ParamStore ps;
  DenseBlock db(ps, "db", 3, 2, 2, rng);
  Tensor x = random_tensor({3, 4, 4}, rng);
  auto inputs = params_of(ps);
  inputs.push_back(x);
  EXPECT_LT(grad_check([&] { return project(db(x)); }, inputs).max_rel_error, 1e-5);
}

TEST(FenmTest, ZeroWeightIdentityShapeDeterminism) {
  auto build = [](ParamStore& ps) {
    Rng rng(3);
    return Fenm(ps, "fenm", 5, 4, 3, rng);
  };
  ParamStore a, b;
  Fenm fa = build(a), fb = build(b);
  Rng rng(4);
  Tensor x = random_tensor({5, 6, 6}, rng);
  Tensor ya = fa(x), yb = fb(x);
  EXPECT_EQ(ya.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(ya.at(i), yb.at(i));
  zero_params(a);
  Tensor z = fa(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(z.at(i), x.at(i));
}

TEST(FenmTest, Gradient) {
  Rng rng(5);
  ParamStore ps;
  Fenm f(ps, "fenm", 3, 2, 2, rng);
  Tensor x = random_tensor({3, 4, 4}, rng);
  auto inputs = params_of(ps);
  inputs.push_back(x);
  EXPECT_LT(grad_check([&] { return project(f(x)); }, inputs, 12).max_rel_error, 1e-5);
}

TEST(FeLossTest, Examples) {
  Rng rng(6);
  Tensor a = random_tensor({2, 3, 3}, rng);
  EXPECT_EQ(fe_loss(a, a).item(), 0.0);
  EXPECT_EQ(fe_loss(Tensor::full({1}, 1.0), Tensor::zeros({1})).item(), 1.0);
  EXPECT_THROW(fe_loss(a, Tensor::zeros({2, 3, 4})), Error);
}

TEST(FeLossTest, GradientIsOneSided) {
  Rng rng(7);
  Tensor e = random_tensor({2, 3, 3}, rng, -1, 1, true);
  Tensor f = random_tensor({2, 3, 3}, rng, -1, 1, true);
  fe_loss(e, f).backward();
  for (std::size_t i = 0; i < e.numel(); ++i) {
    EXPECT_NEAR(e.grad()[i], 2.0 * (e.at(i) - f.at(i)) / double(e.numel()), 1e-15);
  }
  EXPECT_FALSE(f.has_grad());
}

}  // namespace
}  // namespace ilic
