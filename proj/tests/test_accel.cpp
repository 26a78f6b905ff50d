#include <gtest/gtest.h>

#include <cstring>

#include "neurokernel/accel_device.hpp"
#include "neurokernel/random.hpp"

namespace nk = neurokernel;
using namespace nk::accel;
using nk::tensor::Tensor;

namespace {

Tensor random_matrix(nk::Rng& rng, std::size_t r, std::size_t c) {
  std::vector<double> d(r * c);
  for (double& v : d) v = nk::uniform_real(rng, -2.0, 2.0);
  return *Tensor::create({r, c}, std::move(d));
}

TEST(Accel, AllocationRules) {
  auto dev = *AccelDevice::create();
  EXPECT_EQ(dev.free_bytes(), kDeviceBufferBytes);
  EXPECT_EQ(dev.allocate(0).error().kind, nk::ErrorKind::InvalidArgument);
  auto a = *dev.allocate(3);
  auto b = *dev.allocate(8);
  EXPECT_EQ(a.offset, 0u);
  EXPECT_EQ(b.offset, 8u);  // aligned past the 3-byte region
  EXPECT_EQ(dev.allocate(kDeviceBufferBytes).error().kind, nk::ErrorKind::OutOfMemory);
}

TEST(Accel, RegionsAreDisjoint) {
  auto dev = *AccelDevice::create();
  nk::Rng rng(5);
  std::vector<Region> regions;
  while (true) {
    auto r = dev.allocate(1 + nk::uniform_index(rng, 4096));
    if (!r) {
      EXPECT_EQ(r.error().kind, nk::ErrorKind::OutOfMemory);
      break;
    }
    EXPECT_EQ(r->offset % 8, 0u);
    regions.push_back(*r);
  }
  for (std::size_t i = 0; i < regions.size(); ++i) {
    for (std::size_t j = i + 1; j < regions.size(); ++j) {
      const auto& x = regions[i];
      const auto& y = regions[j];
      ASSERT_TRUE(x.offset + x.length <= y.offset || y.offset + y.length <= x.offset);
    }
  }
}

TEST(Accel, MatmulMatchesHost) {
  auto dev = *AccelDevice::create();
  nk::Rng rng(8);
  const auto a = random_matrix(rng, 3, 5);
  const auto b = random_matrix(rng, 5, 4);
  auto ra = *dev.allocate(a.size() * 8);
  auto rb = *dev.allocate(b.size() * 8);
  auto rc = *dev.allocate(12 * 8);
  ASSERT_TRUE(dev.write_tensor(ra, a));
  ASSERT_TRUE(dev.write_tensor(rb, b));
  auto id = dev.submit({AccelOp::Matmul, {{ra, {3, 5}}, {rb, {5, 4}}}, rc});
  ASSERT_TRUE(id);
  EXPECT_EQ(*dev.execute_next(), *id);
  auto got = *dev.read_tensor(rc, {3, 4});
  auto want = *nk::tensor::matmul_naive(a, b);
  EXPECT_EQ(std::memcmp(got.data().data(), want.data().data(), 12 * 8), 0);
}

TEST(Accel, SubmitValidates) {
  auto dev = *AccelDevice::create();
  auto ra = *dev.allocate(64);
  auto rb = *dev.allocate(64);
  auto small = *dev.allocate(8);
  auto other = *AccelDevice::create();
  auto foreign = *other.allocate(64);
  EXPECT_FALSE(dev.submit({AccelOp::Matmul, {{ra, {2, 3}}, {rb, {2, 3}}}, small}));
  EXPECT_FALSE(dev.submit({AccelOp::ElemwiseSum, {{ra, {2, 2}}, {rb, {2, 2}}}, small}));
  EXPECT_FALSE(dev.submit({AccelOp::ElemwiseSum, {{ra, {2, 2}}, {foreign, {2, 2}}}, rb}));
  EXPECT_FALSE(dev.submit({AccelOp::ElemwiseSum, {{ra, {2, 2}}}, rb}));
  EXPECT_FALSE(dev.submit({AccelOp::Matmul, {{ra, {2, 2}}, {rb, {2, 2}}}, ra}));
  EXPECT_EQ(dev.execute_next().error().kind, nk::ErrorKind::InvalidArgument);
}

TEST(Accel, FifoOrderAndBusy) {
  auto dev = *AccelDevice::create();
  auto ra = *dev.allocate(32);
  auto rb = *dev.allocate(32);
  auto rc = *dev.allocate(32);
  std::vector<TaskId> ids;
  for (int i = 0; i < 10; ++i) ids.push_back(*dev.submit({AccelOp::ElemwiseSum, {{ra, {4}}, {rb, {4}}}, rc}));
  EXPECT_EQ(dev.queued(), 10u);
  nk::ErrorKind seen = nk::ErrorKind::InvalidArgument;
  dev.set_in_flight_hook([&] { seen = dev.execute_next().error().kind; });
  std::vector<TaskId> order;
  while (dev.queued() > 0) order.push_back(*dev.execute_next());
  EXPECT_EQ(seen, nk::ErrorKind::DeviceBusy);
  EXPECT_EQ(order, ids);
  EXPECT_EQ(dev.completed(), ids);
}

TEST(Accel, HostViewAliasesDeviceMemory) {
  auto dev = *AccelDevice::create();
  auto r = *dev.allocate(16);
  auto view = *dev.region_doubles(r, 2);
  view[0] = 1.5;
  view[1] = -2.0;
  auto t = *dev.read_tensor(r, {2});
  EXPECT_EQ(t.data()[0], 1.5);
  EXPECT_EQ(t.data()[1], -2.0);
}

}  // namespace
