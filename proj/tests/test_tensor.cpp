#include <gtest/gtest.h>

#include <cstring>
#include <limits>
#include <set>

#include "neurokernel/random.hpp"
#include "neurokernel/tensor.hpp"

namespace nk = neurokernel;
using nk::tensor::Tensor;

namespace {

Tensor make(std::vector<std::size_t> shape, std::vector<double> data) {
  auto t = Tensor::create(std::move(shape), std::move(data));
  EXPECT_TRUE(t);
  return *t;
}

Tensor random_matrix(nk::Rng& rng, std::size_t r, std::size_t c) {
  std::vector<double> d(r * c);
  for (double& v : d) v = nk::uniform_real(rng, -3.0, 3.0);
  return make({r, c}, std::move(d));
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0;
}

TEST(Tensor, CreateValidates) {
  EXPECT_FALSE(Tensor::create({}, {}));
  EXPECT_FALSE(Tensor::create({2, 0}, {}));
  EXPECT_FALSE(Tensor::create({1, 1, 1}, {1.0}));
  EXPECT_FALSE(Tensor::create({2}, {1.0}));
  EXPECT_FALSE(Tensor::create({1}, {std::numeric_limits<double>::quiet_NaN()}));
  EXPECT_TRUE(Tensor::create({3}, {1, 2, 3}));
}

TEST(Tensor, SmallMatmul) {
  const auto a = make({2, 2}, {1, 2, 3, 4});
  const auto b = make({2, 2}, {5, 6, 7, 8});
  auto c = nk::tensor::matmul_naive(a, b);
  ASSERT_TRUE(c);
  EXPECT_EQ(*c, make({2, 2}, {19, 22, 43, 50}));
}

TEST(Tensor, IdentityIsNeutral) {
  nk::Rng rng(1);
  const auto x = random_matrix(rng, 5, 5);
  auto c = nk::tensor::matmul_naive(*Tensor::identity(5), x);
  ASSERT_TRUE(c);
  EXPECT_TRUE(bit_equal(*c, x));
}

TEST(Tensor, ShapeMismatch) {
  const auto a = make({2, 3}, std::vector<double>(6, 1.0));
  EXPECT_EQ(nk::tensor::matmul_naive(a, a).error().kind, nk::ErrorKind::ShapeMismatch);
  EXPECT_EQ(nk::tensor::elementwise_sum(a, make({3, 2}, std::vector<double>(6, 1.0))).error().kind,
            nk::ErrorKind::ShapeMismatch);
  EXPECT_EQ(nk::tensor::matmul_naive(make({3}, {1, 2, 3}), a).error().kind, nk::ErrorKind::ShapeMismatch);
}

TEST(Tensor, ConfigValidation) {
  const auto a = make({1, 1}, {2.0});
  EXPECT_EQ(nk::tensor::matmul_blocked(a, a, {0, 1}).error().kind, nk::ErrorKind::InvalidArgument);
  EXPECT_EQ(nk::tensor::matmul_parallel(a, a, {8, 0}).error().kind, nk::ErrorKind::InvalidArgument);
  EXPECT_EQ(nk::tensor::matmul_parallel(a, a, {8, 9}).error().kind, nk::ErrorKind::InvalidArgument);
}

TEST(Tensor, OverflowToInfinityIsReported) {
  const auto big = make({1, 1}, {1e308});
  EXPECT_EQ(nk::tensor::matmul_naive(big, big).error().kind, nk::ErrorKind::Overflow);
  EXPECT_EQ(nk::tensor::elementwise_sum(big, big).error().kind, nk::ErrorKind::Overflow);
}

TEST(Tensor, ElementwiseSum) {
  auto s = nk::tensor::elementwise_sum(make({3}, {1, 2, 3}), make({3}, {10, 20, 30}));
  ASSERT_TRUE(s);
  EXPECT_EQ(*s, make({3}, {11, 22, 33}));
}

TEST(TensorProperty, SumCommutes) {
  nk::Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_matrix(rng, 4, 7);
    const auto b = random_matrix(rng, 4, 7);
    EXPECT_TRUE(bit_equal(*nk::tensor::elementwise_sum(a, b), *nk::tensor::elementwise_sum(b, a)));
  }
}

TEST(TensorProperty, VariantsMatchNaiveBitForBit) {
  nk::Rng rng(11);
  for (int i = 0; i < 60; ++i) {
    const auto m = static_cast<std::size_t>(nk::uniform_int(rng, 1, 40));
    const auto k = static_cast<std::size_t>(nk::uniform_int(rng, 1, 40));
    const auto n = static_cast<std::size_t>(nk::uniform_int(rng, 1, 40));
    const auto a = random_matrix(rng, m, k);
    const auto b = random_matrix(rng, k, n);
    const auto ref = *nk::tensor::matmul_naive(a, b);
    for (std::size_t bs : {1, 5, 16, 64}) {
      ASSERT_TRUE(bit_equal(*nk::tensor::matmul_blocked(a, b, {bs, 1}), ref)) << bs;
    }
    for (std::size_t w = 1; w <= 8; ++w) {
      ASSERT_TRUE(bit_equal(*nk::tensor::matmul_parallel(a, b, {64, w}), ref)) << w;
    }
  }
}

TEST(TensorProperty, RowPartitionCoversEachRowOnce) {
  for (std::size_t rows = 0; rows <= 40; ++rows) {
    for (std::size_t workers = 1; workers <= 8; ++workers) {
      const auto parts = nk::tensor::partition_rows(rows, workers);
      std::vector<int> hits(rows, 0);
      std::size_t expected_begin = 0;
      for (const auto& p : parts) {
        ASSERT_EQ(p.begin, expected_begin);
        ASSERT_LE(p.begin, p.end);
        for (std::size_t r = p.begin; r < p.end; ++r) ++hits[r];
        expected_begin = p.end;
      }
      ASSERT_EQ(expected_begin, rows);
      for (int h : hits) ASSERT_EQ(h, 1);
    }
  }
}

}  // namespace
