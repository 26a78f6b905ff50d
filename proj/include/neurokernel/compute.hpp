#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include "neurokernel/error.hpp"

namespace neurokernel::compute {

/// Arithmetic opcodes accepted by the simple-compute service.
enum class Opcode : std::uint8_t {
  Add = 0,
  Subtract = 1,
  Multiply = 2,
  Divide = 3,
};

/// Dispatch-table key under which simple_compute is reachable.
inline constexpr long kSimpleComputeSyscall = 548;

/// Maps a raw code to an Opcode; codes outside 0..3 are InvalidArgument.
Result<Opcode> opcode_from_code(std::uint32_t code);

/// Parses the CLI spelling: add, sub, mul, div.
std::optional<Opcode> opcode_from_name(std::string_view name);

/// Checked integer arithmetic. Division truncates toward zero.
Result<std::int64_t> simple_compute(std::int64_t a, std::int64_t b, Opcode op);

/// Same as above but takes the raw opcode as it would arrive from user space.
Result<std::int64_t> simple_compute(std::int64_t a, std::int64_t b, std::uint32_t raw_op);

/// Syscall-style entry point: `number` selects the handler, `args` are its
/// register arguments. Only kSimpleComputeSyscall (a, b, op) is registered.
Result<std::int64_t> dispatch_syscall(long number, std::span<const std::int64_t> args);

}  // namespace neurokernel::compute
