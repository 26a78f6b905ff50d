#include <gtest/gtest.h>

#include <cstdint>
#include <limits>

#include "neurokernel/compute.hpp"
#include "neurokernel/random.hpp"

namespace nk = neurokernel;
using nk::compute::Opcode;
using nk::compute::simple_compute;

namespace {

constexpr auto kMin = std::numeric_limits<std::int64_t>::min();
constexpr auto kMax = std::numeric_limits<std::int64_t>::max();

TEST(Compute, BasicOps) {
  EXPECT_EQ(*simple_compute(6, 3, Opcode::Add), 9);
  EXPECT_EQ(*simple_compute(6, 3, Opcode::Subtract), 3);
  EXPECT_EQ(*simple_compute(6, 3, Opcode::Multiply), 18);
  EXPECT_EQ(*simple_compute(6, 3, Opcode::Divide), 2);
}

TEST(Compute, DivisionTruncatesTowardZero) {
  EXPECT_EQ(*simple_compute(7, 2, Opcode::Divide), 3);
  EXPECT_EQ(*simple_compute(-7, 2, Opcode::Divide), -3);
  EXPECT_EQ(*simple_compute(7, -2, Opcode::Divide), -3);
}

TEST(Compute, DivideByZeroIsInvalidArgument) {
  auto r = simple_compute(1, 0, Opcode::Divide);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().kind, nk::ErrorKind::InvalidArgument);
}

TEST(Compute, OverflowIsReported) {
  EXPECT_EQ(simple_compute(kMax, 1, Opcode::Add).error().kind, nk::ErrorKind::Overflow);
  EXPECT_EQ(simple_compute(kMin, 1, Opcode::Subtract).error().kind, nk::ErrorKind::Overflow);
  EXPECT_EQ(simple_compute(kMax, 2, Opcode::Multiply).error().kind, nk::ErrorKind::Overflow);
  EXPECT_EQ(simple_compute(kMin, -1, Opcode::Divide).error().kind, nk::ErrorKind::Overflow);
  EXPECT_EQ(*simple_compute(kMax, 0, Opcode::Add), kMax);
}

TEST(Compute, UnknownOpcodesAreRejected) {
  for (std::uint32_t code = 4; code <= 255; ++code) {
    auto r = simple_compute(1, 1, code);
    ASSERT_FALSE(r) << code;
    EXPECT_EQ(r.error().kind, nk::ErrorKind::InvalidArgument);
  }
  EXPECT_EQ(*simple_compute(2, 5, std::uint32_t{2}), 10);
}

TEST(Compute, SyscallDispatch) {
  const std::int64_t args[] = {6, 3, 3};
  EXPECT_EQ(*nk::compute::dispatch_syscall(nk::compute::kSimpleComputeSyscall, args), 2);
  EXPECT_FALSE(nk::compute::dispatch_syscall(549, args));
  const std::int64_t bad_op[] = {6, 3, -1};
  EXPECT_FALSE(nk::compute::dispatch_syscall(nk::compute::kSimpleComputeSyscall, bad_op));
  const std::int64_t short_args[] = {6, 3};
  EXPECT_FALSE(nk::compute::dispatch_syscall(nk::compute::kSimpleComputeSyscall, short_args));
}

TEST(Compute, OpcodeNames) {
  EXPECT_EQ(nk::compute::opcode_from_name("sub"), Opcode::Subtract);
  EXPECT_FALSE(nk::compute::opcode_from_name("mod"));
}

TEST(ComputeProperty, AddCommutesAndDivMulReconstructs) {
  nk::Rng rng(7);
  for (int i = 0; i < 100'000; ++i) {
    const std::int64_t a = static_cast<std::int64_t>(rng());
    std::int64_t b = static_cast<std::int64_t>(rng()) >> nk::uniform_int(rng, 0, 62);
    auto ab = simple_compute(a, b, Opcode::Add);
    auto ba = simple_compute(b, a, Opcode::Add);
    ASSERT_EQ(ab.ok(), ba.ok());
    if (ab) {
      ASSERT_EQ(*ab, *ba);
    }

    if (b == 0 || (a == kMin && b == -1)) continue;
    auto q = simple_compute(a, b, Opcode::Divide);
    ASSERT_TRUE(q);
    auto back = simple_compute(*q, b, Opcode::Multiply);
    ASSERT_TRUE(back);
    ASSERT_EQ(*back, a - a % b);
  }
}

}  // namespace
