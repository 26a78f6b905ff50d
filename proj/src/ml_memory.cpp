#include "neurokernel/ml_memory.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <optional>

namespace neurokernel::memory {

namespace {

std::atomic<std::uint64_t> next_pool_id{1};

struct FreeDeleter {
  void operator()(std::byte* p) const { std::free(p); }
};

// calloc hands back lazily-zeroed pages, so a full-scale 512 MiB pool costs
// nothing until blocks are touched.
std::unique_ptr<std::byte[], FreeDeleter> zeroed_bytes(std::size_t n) {
  return std::unique_ptr<std::byte[], FreeDeleter>(static_cast<std::byte*>(std::calloc(n, 1)));
}

}  // namespace

PoolConfig PoolConfig::full_scale() {
  PoolConfig cfg;
  cfg.pool_bytes = 512 * MiB;
  cfg.block_bytes = 4096;
  cfg.large_page_classes = {2 * MiB, 1 * GiB};
  return cfg;
}

Status validate(const PoolConfig& cfg) {
  if (cfg.block_bytes == 0) return make_error(ErrorKind::InvalidArgument, "block_bytes must be positive");
  if (cfg.pool_bytes == 0 || cfg.pool_bytes % cfg.block_bytes != 0) {
    return make_error(ErrorKind::InvalidArgument, "pool_bytes " + std::to_string(cfg.pool_bytes) +
                                                      " is not a multiple of block_bytes " +
                                                      std::to_string(cfg.block_bytes));
  }
  for (std::size_t c : cfg.large_page_classes) {
    if (c == 0 || c % cfg.block_bytes != 0) {
      return make_error(ErrorKind::InvalidArgument,
                        "large page class " + std::to_string(c) + " is not a multiple of block_bytes");
    }
  }
  return ok_status();
}

struct BlockPool::State {
  PoolConfig cfg;
  std::uint64_t pool_id = 0;
  std::size_t total_blocks = 0;
  std::vector<std::uint64_t> bitmap;
  std::unique_ptr<std::byte[], FreeDeleter> storage;
  std::unordered_map<std::uint64_t, BlockHandle> ledger;
  std::uint64_t next_handle = 0;
  std::size_t allocated = 0;
  mutable std::mutex mu;

  bool test(std::size_t block) const { return (bitmap[block / 64] >> (block % 64)) & 1u; }

  void set_range(std::size_t first, std::size_t count, bool value) {
    for (std::size_t b = first; b < first + count; ++b) {
      const std::uint64_t mask = std::uint64_t{1} << (b % 64);
      if (value) {
        bitmap[b / 64] |= mask;
      } else {
        bitmap[b / 64] &= ~mask;
      }
    }
  }

  bool run_free(std::size_t first, std::size_t count) const {
    if (first + count > total_blocks) return false;
    for (std::size_t b = first; b < first + count; ++b) {
      if (test(b)) return false;
    }
    return true;
  }

  std::optional<std::size_t> first_fit(std::size_t count) const {
    std::size_t run = 0;
    for (std::size_t b = 0; b < total_blocks; ++b) {
      if (run == 0 && b % 64 == 0 && bitmap[b / 64] == ~std::uint64_t{0}) {
        b += 63;
        continue;
      }
      if (test(b)) {
        run = 0;
      } else if (++run == count) {
        return b + 1 - count;
      }
    }
    return std::nullopt;
  }

  BlockHandle commit(std::size_t first, std::size_t count) {
    set_range(first, count, true);
    allocated += count;
    BlockHandle h{pool_id, next_handle++, first, count};
    ledger.emplace(h.id, h);
    return h;
  }
};

BlockPool::BlockPool(std::unique_ptr<State> state) : state_(std::move(state)) {}
BlockPool::BlockPool(BlockPool&&) noexcept = default;
BlockPool& BlockPool::operator=(BlockPool&&) noexcept = default;
BlockPool::~BlockPool() = default;

Result<BlockPool> BlockPool::create(const PoolConfig& cfg) {
  NK_RETURN_IF_ERROR(validate(cfg));
  auto state = std::make_unique<State>();
  state->cfg = cfg;
  state->pool_id = next_pool_id.fetch_add(1);
  state->total_blocks = cfg.pool_bytes / cfg.block_bytes;
  state->bitmap.assign((state->total_blocks + 63) / 64, 0);
  state->storage = zeroed_bytes(cfg.pool_bytes);
  if (!state->storage) {
    return make_error(ErrorKind::OutOfMemory, "cannot reserve " + std::to_string(cfg.pool_bytes) + " bytes");
  }
  // Tail bits beyond total_blocks stay set so whole-word skips never run past the end.
  for (std::size_t b = state->total_blocks; b < state->bitmap.size() * 64; ++b) {
    state->bitmap[b / 64] |= std::uint64_t{1} << (b % 64);
  }
  return BlockPool(std::move(state));
}

Result<BlockHandle> BlockPool::alloc(std::size_t n_blocks) {
  if (n_blocks == 0) return make_error(ErrorKind::InvalidArgument, "n_blocks must be >= 1");
  std::lock_guard lock(state_->mu);
  auto first = state_->first_fit(n_blocks);
  if (!first) {
    return make_error(ErrorKind::OutOfMemory,
                      "no contiguous run of " + std::to_string(n_blocks) + " free blocks");
  }
  return state_->commit(*first, n_blocks);
}

Status BlockPool::free(const BlockHandle& handle) {
  std::lock_guard lock(state_->mu);
  if (handle.pool_id != state_->pool_id) {
    return make_error(ErrorKind::InvalidArgument, "handle belongs to another pool");
  }
  auto it = state_->ledger.find(handle.id);
  if (it == state_->ledger.end() || !(it->second == handle)) {
    return make_error(ErrorKind::InvalidArgument, "handle " + std::to_string(handle.id) + " is not live");
  }
  const std::size_t bb = state_->cfg.block_bytes;
  std::memset(state_->storage.get() + handle.first_block * bb, 0, handle.n_blocks * bb);
  state_->set_range(handle.first_block, handle.n_blocks, false);
  state_->allocated -= handle.n_blocks;
  state_->ledger.erase(it);
  return ok_status();
}

Result<BlockHandle> BlockPool::large_page_alloc(std::size_t class_bytes) {
  std::lock_guard lock(state_->mu);
  const auto& classes = state_->cfg.large_page_classes;
  if (std::find(classes.begin(), classes.end(), class_bytes) == classes.end()) {
    return make_error(ErrorKind::InvalidArgument,
                      "large page class " + std::to_string(class_bytes) + " is not registered");
  }
  const std::size_t span = class_bytes / state_->cfg.block_bytes;
  for (std::size_t first = 0; first + span <= state_->total_blocks; first += span) {
    if (state_->run_free(first, span)) return state_->commit(first, span);
  }
  return make_error(ErrorKind::OutOfMemory,
                    "no aligned free run for class " + std::to_string(class_bytes));
}

Result<std::span<std::byte>> BlockPool::bytes(const BlockHandle& handle) {
  std::lock_guard lock(state_->mu);
  auto it = state_->ledger.find(handle.id);
  if (handle.pool_id != state_->pool_id || it == state_->ledger.end() || !(it->second == handle)) {
    return make_error(ErrorKind::InvalidArgument, "handle is not live in this pool");
  }
  const std::size_t bb = state_->cfg.block_bytes;
  return std::span<std::byte>(state_->storage.get() + handle.first_block * bb, handle.n_blocks * bb);
}

PoolStats BlockPool::stats() const {
  std::lock_guard lock(state_->mu);
  return PoolStats{state_->total_blocks, state_->total_blocks - state_->allocated, state_->allocated,
                   state_->ledger.size()};
}

const PoolConfig& BlockPool::config() const { return state_->cfg; }

bool BlockPool::is_allocated(std::size_t block) const {
  std::lock_guard lock(state_->mu);
  return block < state_->total_blocks && state_->test(block);
}

std::vector<bool> BlockPool::bitmap() const {
  std::lock_guard lock(state_->mu);
  std::vector<bool> bits(state_->total_blocks);
  for (std::size_t b = 0; b < state_->total_blocks; ++b) bits[b] = state_->test(b);
  return bits;
}

std::string BlockPool::bitmap_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  const auto bits = bitmap();
  std::string out;
  out.reserve((bits.size() + 7) / 8 * 2);
  for (std::size_t i = 0; i < bits.size(); i += 8) {
    unsigned byte = 0;
    for (std::size_t b = 0; b < 8 && i + b < bits.size(); ++b) {
      if (bits[i + b]) byte |= 1u << b;
    }
    out.push_back(kDigits[byte >> 4]);
    out.push_back(kDigits[byte & 0xf]);
  }
  return out;
}

std::vector<BlockHandle> BlockPool::live_handles() const {
  std::lock_guard lock(state_->mu);
  std::vector<BlockHandle> out;
  out.reserve(state_->ledger.size());
  for (const auto& [id, h] : state_->ledger) out.push_back(h);
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  return out;
}

// SharedBuffer

struct SharedBuffer::View::Storage {
  std::unique_ptr<std::byte[], FreeDeleter> bytes;
  std::size_t size = 0;
  std::atomic<std::uint64_t> copies{0};
};

Result<SharedBuffer> SharedBuffer::create(std::size_t size) {
  if (size == 0) return make_error(ErrorKind::InvalidArgument, "shared buffer size must be positive");
  auto storage = std::make_shared<View::Storage>();
  storage->bytes = zeroed_bytes(size);
  if (!storage->bytes) return make_error(ErrorKind::OutOfMemory, "cannot reserve shared buffer");
  storage->size = size;
  return SharedBuffer(std::move(storage));
}

std::size_t SharedBuffer::size() const { return storage_->size; }
std::uint64_t SharedBuffer::copy_count() const { return storage_->copies.load(); }

std::size_t SharedBuffer::View::size() const { return storage_->size; }

Status SharedBuffer::View::check_range(std::size_t offset, std::size_t len) const {
  if (offset > storage_->size || len > storage_->size - offset) {
    return make_error(ErrorKind::InvalidArgument, "range [" + std::to_string(offset) + ", +" +
                                                      std::to_string(len) + ") exceeds buffer of " +
                                                      std::to_string(storage_->size) + " bytes");
  }
  return ok_status();
}

Status SharedBuffer::View::write(std::size_t offset, std::span<const std::byte> data) const {
  NK_RETURN_IF_ERROR(check_range(offset, data.size()));
  std::copy(data.begin(), data.end(), storage_->bytes.get() + offset);
  return ok_status();
}

Status SharedBuffer::View::write(std::size_t offset, std::string_view text) const {
  return write(offset, std::as_bytes(std::span(text.data(), text.size())));
}

Result<std::span<const std::byte>> SharedBuffer::View::read(std::size_t offset, std::size_t len) const {
  NK_RETURN_IF_ERROR(check_range(offset, len));
  // A zero-length read at offset == size is still out of range.
  if (offset >= storage_->size) {
    return make_error(ErrorKind::InvalidArgument, "offset " + std::to_string(offset) + " out of range");
  }
  return std::span<const std::byte>(storage_->bytes.get() + offset, len);
}

Result<std::span<std::byte>> SharedBuffer::View::mutable_bytes(std::size_t offset, std::size_t len) const {
  NK_RETURN_IF_ERROR(check_range(offset, len));
  return std::span<std::byte>(storage_->bytes.get() + offset, len);
}

Result<std::span<double>> SharedBuffer::View::doubles(std::size_t offset, std::size_t count) const {
  if (offset % sizeof(double) != 0) {
    return make_error(ErrorKind::InvalidArgument, "offset is not double-aligned");
  }
  if (count > storage_->size / sizeof(double)) {
    return make_error(ErrorKind::InvalidArgument, "double view exceeds buffer");
  }
  NK_RETURN_IF_ERROR(check_range(offset, count * sizeof(double)));
  auto* base = reinterpret_cast<double*>(storage_->bytes.get() + offset);
  return std::span<double>(base, count);
}

Result<std::vector<std::byte>> SharedBuffer::View::copy_out(std::size_t offset, std::size_t len) const {
  NK_RETURN_IF_ERROR(check_range(offset, len));
  storage_->copies.fetch_add(1);
  const std::byte* src = storage_->bytes.get() + offset;
  return std::vector<std::byte>(src, src + len);
}

}  // namespace neurokernel::memory
