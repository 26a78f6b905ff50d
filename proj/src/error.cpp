#include "neurokernel/error.hpp"

namespace neurokernel {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
      return "InvalidArgument";
    case ErrorKind::OutOfMemory:
      return "OutOfMemory";
    case ErrorKind::Overflow:
      return "Overflow";
    case ErrorKind::ShapeMismatch:
      return "ShapeMismatch";
    case ErrorKind::ResourceConsumed:
      return "ResourceConsumed";
    case ErrorKind::DeviceBusy:
      return "DeviceBusy";
    case ErrorKind::NodeUnreachable:
      return "NodeUnreachable";
    case ErrorKind::ChecksumMismatch:
      return "ChecksumMismatch";
  }
  return "Unknown";
}

std::string KernelError::message() const {
  std::string out(to_string(kind));
  if (!detail.empty()) {
    out += ": ";
    out += detail;
  }
  return out;
}

}  // namespace neurokernel
