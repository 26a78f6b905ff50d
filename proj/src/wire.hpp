#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace neurokernel::wire {

/// Little-endian append-only encoder.
class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void bytes(std::span<const std::byte> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(std::as_bytes(std::span(s.data(), s.size())));
  }

  std::vector<std::byte>& buffer() { return out_; }
  std::vector<std::byte> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
  }
  std::vector<std::byte> out_;
};

/// Bounds-checked decoder; every read reports failure instead of overrunning.
class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  bool u8(std::uint8_t& v) {
    std::uint64_t t;
    if (!get(t, 1)) return false;
    v = static_cast<std::uint8_t>(t);
    return true;
  }
  bool u16(std::uint16_t& v) {
    std::uint64_t t;
    if (!get(t, 2)) return false;
    v = static_cast<std::uint16_t>(t);
    return true;
  }
  bool u32(std::uint32_t& v) {
    std::uint64_t t;
    if (!get(t, 4)) return false;
    v = static_cast<std::uint32_t>(t);
    return true;
  }
  bool u64(std::uint64_t& v) { return get(v, 8); }
  bool f64(double& v) {
    std::uint64_t bits;
    if (!u64(bits)) return false;
    std::memcpy(&v, &bits, sizeof v);
    return true;
  }
  bool bytes(std::size_t n, std::span<const std::byte>& out) {
    if (remaining() < n) return false;
    out = in_.subspan(pos_, n);
    pos_ += n;
    return true;
  }
  bool str(std::string& s) {
    std::uint32_t n;
    std::span<const std::byte> b;
    if (!u32(n) || !bytes(n, b)) return false;
    s.assign(reinterpret_cast<const char*>(b.data()), b.size());
    return true;
  }

  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  bool get(std::uint64_t& v, int n) {
    if (remaining() < static_cast<std::size_t>(n)) return false;
    v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += n;
    return true;
  }
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

}  // namespace neurokernel::wire
