#include "neurokernel/compute.hpp"

#include <limits>
#include <string>

namespace neurokernel::compute {

Result<Opcode> opcode_from_code(std::uint32_t code) {
  if (code > static_cast<std::uint32_t>(Opcode::Divide)) {
    return make_error(ErrorKind::InvalidArgument, "unknown opcode " + std::to_string(code));
  }
  return static_cast<Opcode>(code);
}

std::optional<Opcode> opcode_from_name(std::string_view name) {
  if (name == "add") return Opcode::Add;
  if (name == "sub") return Opcode::Subtract;
  if (name == "mul") return Opcode::Multiply;
  if (name == "div") return Opcode::Divide;
  return std::nullopt;
}

Result<std::int64_t> simple_compute(std::int64_t a, std::int64_t b, Opcode op) {
  std::int64_t out = 0;
  switch (op) {
    case Opcode::Add:
      if (__builtin_add_overflow(a, b, &out)) {
        return make_error(ErrorKind::Overflow, "addition overflows int64");
      }
      return out;
    case Opcode::Subtract:
      if (__builtin_sub_overflow(a, b, &out)) {
        return make_error(ErrorKind::Overflow, "subtraction overflows int64");
      }
      return out;
    case Opcode::Multiply:
      if (__builtin_mul_overflow(a, b, &out)) {
        return make_error(ErrorKind::Overflow, "multiplication overflows int64");
      }
      return out;
    case Opcode::Divide:
      if (b == 0) {
        return make_error(ErrorKind::InvalidArgument, "division by zero");
      }
      if (a == std::numeric_limits<std::int64_t>::min() && b == -1) {
        return make_error(ErrorKind::Overflow, "division overflows int64");
      }
      return a / b;
  }
  return make_error(ErrorKind::InvalidArgument, "unknown opcode");
}

Result<std::int64_t> simple_compute(std::int64_t a, std::int64_t b, std::uint32_t raw_op) {
  auto op = opcode_from_code(raw_op);
  if (!op) return op.error();
  return simple_compute(a, b, *op);
}

Result<std::int64_t> dispatch_syscall(long number, std::span<const std::int64_t> args) {
  if (number != kSimpleComputeSyscall) {
    return make_error(ErrorKind::InvalidArgument, "no handler for syscall " + std::to_string(number));
  }
  if (args.size() != 3) {
    return make_error(ErrorKind::InvalidArgument, "simple_compute takes 3 arguments");
  }
  if (args[2] < 0 || args[2] > std::numeric_limits<std::uint32_t>::max()) {
    return make_error(ErrorKind::InvalidArgument, "unknown opcode " + std::to_string(args[2]));
  }
  return simple_compute(args[0], args[1], static_cast<std::uint32_t>(args[2]));
}

}  // namespace neurokernel::compute
