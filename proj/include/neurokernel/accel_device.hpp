#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <vector>

#include "neurokernel/error.hpp"
#include "neurokernel/ml_memory.hpp"
#include "neurokernel/tensor.hpp"

namespace neurokernel::accel {

inline constexpr std::size_t kDeviceBufferBytes = 1024 * 1024;

struct Region {
  std::uint64_t device_id = 0;
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const Region&, const Region&) = default;
};

enum class AccelOp { ElemwiseSum, Matmul };

struct TensorRef {
  Region region;
  std::vector<std::size_t> shape;
};

struct AccelTask {
  AccelOp op = AccelOp::ElemwiseSum;
  std::vector<TensorRef> inputs;
  Region output;
};

using TaskId = std::uint64_t;

/// Simulated accelerator: one 1 MiB buffer, first-fit region allocation,
/// and a FIFO task queue executed one task at a time. The buffer is a
/// SharedBuffer, so the host sees device memory through aliasing views.
class AccelDevice {
 public:
  static Result<AccelDevice> create();

  AccelDevice(AccelDevice&&) noexcept;
  AccelDevice& operator=(AccelDevice&&) noexcept;
  ~AccelDevice();

  /// Regions are placed at 8-byte aligned offsets so they can hold doubles.
  Result<Region> allocate(std::size_t size);
  Result<TaskId> submit(AccelTask task);
  /// Runs the FIFO head; returns the id of the task that completed.
  Result<TaskId> execute_next();

  /// Host-side view of a region's doubles. Aliases device memory.
  Result<std::span<double>> region_doubles(const Region& region, std::size_t count) const;
  Status write_tensor(const Region& region, const tensor::Tensor& t) const;
  /// Materializes a host tensor; this is an explicit copy out of the buffer.
  Result<tensor::Tensor> read_tensor(const Region& region, std::vector<std::size_t> shape) const;

  std::size_t free_bytes() const;
  std::size_t queued() const;
  std::vector<TaskId> completed() const;
  const memory::SharedBuffer& buffer() const;
  std::uint64_t id() const;

  /// Invoked while a task is in flight, between reading inputs and writing
  /// the output. Lets tests observe the single in-flight task contract.
  void set_in_flight_hook(std::function<void()> hook);

 private:
  struct State;
  explicit AccelDevice(std::unique_ptr<State> state);
  std::unique_ptr<State> state_;
};

}  // namespace neurokernel::accel
