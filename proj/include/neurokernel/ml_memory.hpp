#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "neurokernel/error.hpp"

namespace neurokernel::memory {

inline constexpr std::size_t KiB = 1024;
inline constexpr std::size_t MiB = 1024 * KiB;
inline constexpr std::size_t GiB = 1024 * MiB;

struct PoolConfig {
  std::size_t pool_bytes = 8 * MiB;
  std::size_t block_bytes = 4096;
  // Scaled-down stand-ins for 2 MiB / 1 GiB huge pages.
  std::vector<std::size_t> large_page_classes{64 * KiB, 1 * MiB};

  /// 512 MiB pool with 2 MiB and 1 GiB page classes.
  static PoolConfig full_scale();
};

Status validate(const PoolConfig& cfg);

struct BlockHandle {
  std::uint64_t pool_id = 0;
  std::uint64_t id = 0;
  std::size_t first_block = 0;
  std::size_t n_blocks = 0;

  friend bool operator==(const BlockHandle&, const BlockHandle&) = default;
};

struct PoolStats {
  std::size_t total_blocks = 0;
  std::size_t free_blocks = 0;
  std::size_t allocated_blocks = 0;
  std::size_t live_handles = 0;

  friend bool operator==(const PoolStats&, const PoolStats&) = default;
};

/// Fixed-block arena with one bitmap bit per block (1 = allocated).
/// Placement is first-fit; fragmentation is reported as OutOfMemory, never
/// compacted. All operations are serialized internally.
class BlockPool {
 public:
  static Result<BlockPool> create(const PoolConfig& cfg);

  BlockPool(BlockPool&&) noexcept;
  BlockPool& operator=(BlockPool&&) noexcept;
  ~BlockPool();

  Result<BlockHandle> alloc(std::size_t n_blocks);
  Status free(const BlockHandle& handle);
  /// Run of class_bytes / block_bytes blocks whose byte offset is a multiple of class_bytes.
  Result<BlockHandle> large_page_alloc(std::size_t class_bytes);

  /// Bytes backing a live handle.
  Result<std::span<std::byte>> bytes(const BlockHandle& handle);

  PoolStats stats() const;
  const PoolConfig& config() const;
  bool is_allocated(std::size_t block) const;
  std::vector<bool> bitmap() const;
  /// Bitmap as hex, one byte per 8 blocks, block 8i+b stored in bit b of byte i.
  std::string bitmap_hex() const;
  std::vector<BlockHandle> live_handles() const;

 private:
  struct State;
  explicit BlockPool(std::unique_ptr<State> state);
  std::unique_ptr<State> state_;
};

/// Fixed-size byte region shared by reference among views. Reads hand back
/// spans into the shared storage; only copy_out duplicates bytes and it is
/// the only operation that moves copy_count.
class SharedBuffer {
 public:
  static constexpr std::size_t kDefaultSize = 4096;

  static Result<SharedBuffer> create(std::size_t size = kDefaultSize);

  class View {
   public:
    Status write(std::size_t offset, std::span<const std::byte> data) const;
    Status write(std::size_t offset, std::string_view text) const;
    Result<std::span<const std::byte>> read(std::size_t offset, std::size_t len) const;
    Result<std::span<std::byte>> mutable_bytes(std::size_t offset, std::size_t len) const;
    /// Aligned double view; offset must be a multiple of sizeof(double).
    Result<std::span<double>> doubles(std::size_t offset, std::size_t count) const;
    Result<std::vector<std::byte>> copy_out(std::size_t offset, std::size_t len) const;
    std::size_t size() const;

   private:
    friend class SharedBuffer;
    struct Storage;
    explicit View(std::shared_ptr<Storage> storage) : storage_(std::move(storage)) {}
    Status check_range(std::size_t offset, std::size_t len) const;
    std::shared_ptr<Storage> storage_;
  };

  View view() const { return View(storage_); }
  std::size_t size() const;
  std::uint64_t copy_count() const;
  long use_count() const { return storage_.use_count(); }

 private:
  explicit SharedBuffer(std::shared_ptr<View::Storage> storage) : storage_(std::move(storage)) {}
  std::shared_ptr<View::Storage> storage_;
};

}  // namespace neurokernel::memory
