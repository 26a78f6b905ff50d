#include "neurokernel/accel_device.hpp"

#include <algorithm>
#include <cstring>
#include <atomic>

namespace neurokernel::accel {

namespace {

std::atomic<std::uint64_t> next_device_id{1};

constexpr std::size_t align_up(std::size_t v) {
  return (v + sizeof(double) - 1) / sizeof(double) * sizeof(double);
}

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

bool overlaps(const Region& a, const Region& b) {
  return a.offset < b.offset + b.length && b.offset < a.offset + a.length;
}

}  // namespace

struct AccelDevice::State {
  std::uint64_t id = 0;
  memory::SharedBuffer buffer;
  std::map<std::size_t, std::size_t> regions;  // offset -> length
  std::deque<std::pair<TaskId, AccelTask>> queue;
  std::vector<TaskId> completed;
  TaskId next_task = 0;
  bool busy = false;
  std::function<void()> in_flight_hook;
  mutable std::mutex mu;

  explicit State(memory::SharedBuffer buf) : buffer(std::move(buf)) {}

  Status check_region(const Region& r, std::size_t need_bytes) const {
    if (r.device_id != id) return make_error(ErrorKind::InvalidArgument, "region belongs to another device");
    auto it = regions.find(r.offset);
    if (it == regions.end() || it->second != r.length) {
      return make_error(ErrorKind::InvalidArgument, "dangling region at offset " + std::to_string(r.offset));
    }
    if (need_bytes > r.length) {
      return make_error(ErrorKind::InvalidArgument, "region of " + std::to_string(r.length) +
                                                        " bytes cannot hold " + std::to_string(need_bytes));
    }
    return ok_status();
  }

  Status check_task(const AccelTask& task) const {
    if (task.inputs.size() != 2) return make_error(ErrorKind::InvalidArgument, "tasks take two inputs");
    const auto& a = task.inputs[0];
    const auto& b = task.inputs[1];
    for (const auto& in : task.inputs) {
      if (in.shape.empty() || in.shape.size() > 2 ||
          std::find(in.shape.begin(), in.shape.end(), 0u) != in.shape.end()) {
        return make_error(ErrorKind::InvalidArgument, "bad operand shape");
      }
      NK_RETURN_IF_ERROR(check_region(in.region, element_count(in.shape) * sizeof(double)));
    }
    std::size_t out_elems = 0;
    if (task.op == AccelOp::ElemwiseSum) {
      if (a.shape != b.shape) {
        return make_error(ErrorKind::InvalidArgument,
                          "sum of " + tensor::shape_string(a.shape) + " and " + tensor::shape_string(b.shape));
      }
      out_elems = element_count(a.shape);
      for (const auto& in : task.inputs) {
        if (overlaps(in.region, task.output) && !(in.region == task.output)) {
          return make_error(ErrorKind::InvalidArgument, "output partially overlaps an input");
        }
      }
    } else {
      if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
        return make_error(ErrorKind::InvalidArgument, "matmul of " + tensor::shape_string(a.shape) +
                                                          " by " + tensor::shape_string(b.shape));
      }
      out_elems = a.shape[0] * b.shape[1];
      for (const auto& in : task.inputs) {
        if (overlaps(in.region, task.output)) {
          return make_error(ErrorKind::InvalidArgument, "matmul output overlaps an input");
        }
      }
    }
    return check_region(task.output, out_elems * sizeof(double));
  }

  std::span<double> doubles(const Region& r, std::size_t count) const {
    return *buffer.view().doubles(r.offset, count);
  }
};

AccelDevice::AccelDevice(std::unique_ptr<State> state) : state_(std::move(state)) {}
AccelDevice::AccelDevice(AccelDevice&&) noexcept = default;
AccelDevice& AccelDevice::operator=(AccelDevice&&) noexcept = default;
AccelDevice::~AccelDevice() = default;

Result<AccelDevice> AccelDevice::create() {
  auto buf = memory::SharedBuffer::create(kDeviceBufferBytes);
  if (!buf) return make_error(ErrorKind::OutOfMemory, "cannot reserve device buffer");
  auto state = std::make_unique<State>(std::move(*buf));
  state->id = next_device_id.fetch_add(1);
  return AccelDevice(std::move(state));
}

Result<Region> AccelDevice::allocate(std::size_t size) {
  if (size == 0) return make_error(ErrorKind::InvalidArgument, "allocation size must be >= 1");
  std::lock_guard lock(state_->mu);
  std::size_t cursor = 0;
  for (const auto& [offset, length] : state_->regions) {
    if (cursor + size <= offset) break;
    cursor = align_up(offset + length);
  }
  if (cursor > kDeviceBufferBytes || size > kDeviceBufferBytes - cursor) {
    return make_error(ErrorKind::OutOfMemory, "no room for " + std::to_string(size) + " bytes");
  }
  state_->regions.emplace(cursor, size);
  return Region{state_->id, cursor, size};
}

Result<TaskId> AccelDevice::submit(AccelTask task) {
  std::lock_guard lock(state_->mu);
  NK_RETURN_IF_ERROR(state_->check_task(task));
  const TaskId id = state_->next_task++;
  state_->queue.emplace_back(id, std::move(task));
  return id;
}

Result<TaskId> AccelDevice::execute_next() {
  std::pair<TaskId, AccelTask> item;
  std::function<void()> hook;
  {
    std::lock_guard lock(state_->mu);
    if (state_->busy) return make_error(ErrorKind::DeviceBusy, "a task is already in flight");
    if (state_->queue.empty()) return make_error(ErrorKind::InvalidArgument, "task queue is empty");
    NK_RETURN_IF_ERROR(state_->check_task(state_->queue.front().second));
    item = std::move(state_->queue.front());
    state_->queue.pop_front();
    state_->busy = true;
    hook = state_->in_flight_hook;
  }

  const AccelTask& task = item.second;
  const auto& a = task.inputs[0];
  const auto& b = task.inputs[1];
  if (hook) hook();
  if (task.op == AccelOp::ElemwiseSum) {
    const std::size_t n = element_count(a.shape);
    tensor::kernels::sum(state_->doubles(a.region, n), state_->doubles(b.region, n),
                         state_->doubles(task.output, n));
  } else {
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    tensor::kernels::matmul(state_->doubles(a.region, m * k), state_->doubles(b.region, k * n),
                            state_->doubles(task.output, m * n), m, k, n);
  }

  std::lock_guard lock(state_->mu);
  state_->busy = false;
  state_->completed.push_back(item.first);
  return item.first;
}

Result<std::span<double>> AccelDevice::region_doubles(const Region& region, std::size_t count) const {
  std::lock_guard lock(state_->mu);
  NK_RETURN_IF_ERROR(state_->check_region(region, count * sizeof(double)));
  return state_->doubles(region, count);
}

Status AccelDevice::write_tensor(const Region& region, const tensor::Tensor& t) const {
  auto dst = region_doubles(region, t.size());
  if (!dst) return dst.error();
  std::copy(t.data().begin(), t.data().end(), dst->begin());
  return ok_status();
}

Result<tensor::Tensor> AccelDevice::read_tensor(const Region& region, std::vector<std::size_t> shape) const {
  {
    std::lock_guard lock(state_->mu);
    NK_RETURN_IF_ERROR(state_->check_region(region, element_count(shape) * sizeof(double)));
  }
  auto bytes = state_->buffer.view().copy_out(region.offset, element_count(shape) * sizeof(double));
  if (!bytes) return bytes.error();
  std::vector<double> data(element_count(shape));
  std::memcpy(data.data(), bytes->data(), bytes->size());
  return tensor::Tensor::create(std::move(shape), std::move(data));
}

std::size_t AccelDevice::free_bytes() const {
  std::lock_guard lock(state_->mu);
  std::size_t used = 0;
  for (const auto& [offset, length] : state_->regions) used += length;
  return kDeviceBufferBytes - used;
}

std::size_t AccelDevice::queued() const {
  std::lock_guard lock(state_->mu);
  return state_->queue.size();
}

std::vector<TaskId> AccelDevice::completed() const {
  std::lock_guard lock(state_->mu);
  return state_->completed;
}

const memory::SharedBuffer& AccelDevice::buffer() const { return state_->buffer; }

std::uint64_t AccelDevice::id() const { return state_->id; }

void AccelDevice::set_in_flight_hook(std::function<void()> hook) {
  std::lock_guard lock(state_->mu);
  state_->in_flight_hook = std::move(hook);
}

}  // namespace neurokernel::accel
