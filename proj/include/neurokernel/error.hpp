#pragma once

#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>

namespace neurokernel {

enum class ErrorKind {
  InvalidArgument,   // EINVAL
  OutOfMemory,       // ENOMEM
  Overflow,
  ShapeMismatch,
  ResourceConsumed,
  DeviceBusy,
  NodeUnreachable,
  ChecksumMismatch,
};

std::string_view to_string(ErrorKind kind);

struct KernelError {
  ErrorKind kind;
  std::string detail;

  std::string message() const;
};

inline KernelError make_error(ErrorKind kind, std::string detail = {}) {
  return KernelError{kind, std::move(detail)};
}

/// Either a value or exactly one KernelError.
template <typename T>
class [[nodiscard]] Result {
 public:
  Result(T value) : storage_(std::in_place_index<0>, std::move(value)) {}
  Result(KernelError error) : storage_(std::in_place_index<1>, std::move(error)) {}

  bool ok() const { return storage_.index() == 0; }
  explicit operator bool() const { return ok(); }

  T& value() & { return std::get<0>(storage_); }
  const T& value() const& { return std::get<0>(storage_); }
  T&& value() && { return std::get<0>(std::move(storage_)); }

  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }
  T&& operator*() && { return std::move(*this).value(); }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

  const KernelError& error() const { return std::get<1>(storage_); }

 private:
  std::variant<T, KernelError> storage_;
};

template <>
class [[nodiscard]] Result<void> {
 public:
  Result() = default;
  Result(KernelError error) : error_(std::move(error)), ok_(false) {}

  bool ok() const { return ok_; }
  explicit operator bool() const { return ok_; }
  const KernelError& error() const { return error_; }

 private:
  KernelError error_{ErrorKind::InvalidArgument, {}};
  bool ok_ = true;
};

using Status = Result<void>;

inline Status ok_status() { return Status{}; }

}  // namespace neurokernel

#define NK_RETURN_IF_ERROR(expr)              \
  do {                                        \
    auto nk_status_ = (expr);                 \
    if (!nk_status_.ok()) {                   \
      return nk_status_.error();              \
    }                                         \
  } while (0)
