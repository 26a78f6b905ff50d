#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "neurokernel/error.hpp"

namespace neurokernel::sched {

inline constexpr int kMlSchedPriority = 10;
inline constexpr int kDeprioritizePenalty = 10;
inline constexpr std::size_t kFpSlots = 16;

// Cost model for the simulated cycle counter.
inline constexpr std::uint64_t kCyclesPerMultiplyAdd = 1;
inline constexpr std::uint64_t kCyclesPerAllocation = 10;

using FpRegisters = std::array<double, kFpSlots>;
using TaskId = std::uint64_t;

enum class TaskState { Queued, Running, Preempted, Done };

const char* to_string(TaskState s);

/// Monotone simulated cycle counter.
class PerfCounter {
 public:
  void charge(std::uint64_t cycles) { cycles_ += cycles; }
  std::uint64_t cpu_cycles() const { return cycles_; }
  void reset() { cycles_ = 0; }

 private:
  std::uint64_t cycles_ = 0;
};

class MlScheduler;

/// What a task step sees while it holds the CPU.
class ExecutionContext {
 public:
  void charge_multiply_adds(std::uint64_t n);
  void charge_allocations(std::uint64_t n);
  /// Cycles left before the current timeslice reaches the quantum.
  std::uint64_t slice_remaining() const;
  /// The simulated FPU register file, shared by every task.
  FpRegisters& fpu();

 private:
  friend class MlScheduler;
  ExecutionContext(MlScheduler& sched, std::uint64_t& slice_used, std::uint64_t& task_cycles)
      : sched_(sched), slice_used_(slice_used), task_cycles_(task_cycles) {}
  void charge(std::uint64_t cycles);

  MlScheduler& sched_;
  std::uint64_t& slice_used_;
  std::uint64_t& task_cycles_;
};

enum class StepResult { Continue, Finished };

/// Work is a resumable step function. The executor calls it repeatedly until
/// it returns Finished or the slice reaches the quantum (cooperative
/// preemption). State that must survive preemption lives in the closure or
/// in the FPU registers.
using Work = std::function<StepResult(ExecutionContext&)>;

struct MlTask {
  TaskId id = 0;
  int priority = kMlSchedPriority;
  TaskState state = TaskState::Queued;
  Work work;
  std::uint64_t consumed_cycles = 0;
  FpRegisters fp_context{};
  std::uint64_t runs = 0;
  std::uint64_t preemptions = 0;
  bool penalized = false;
};

/// Task that burns exactly `cycles` multiply-adds, stopping at slice boundaries.
Work synthetic_work(std::uint64_t cycles);

struct SchedulerConfig {
  std::uint64_t deprioritize_threshold = 1'000'000;
  std::size_t batch_size = 4;
  std::uint64_t quantum = 10'000;

  static SchedulerConfig full_scale();
};

Status validate(const SchedulerConfig& cfg);

/// Penalizes a task once, the first time consumed_cycles exceeds threshold.
/// Returns the (possibly new) priority.
int adjust_scheduling(MlTask& task, std::uint64_t threshold);

/// ML scheduling class: priority queue (lower value runs first, FIFO among
/// equals), batch execution with quantum preemption, cycle-feedback
/// deprioritization and FPU context switching.
///
/// enqueue() is safe from any thread; batch_execute() has a single consumer.
class MlScheduler {
 public:
  explicit MlScheduler(SchedulerConfig cfg = {});

  Status enqueue(MlTask task);
  std::optional<MlTask> dequeue();
  Result<std::vector<TaskId>> batch_execute(std::size_t n);

  Status save_fp_context(MlTask& task);
  Status restore_fp_context(MlTask& task);

  std::size_t queued() const;
  /// Copy of a queued task, or nullopt if `id` is not in the queue.
  std::optional<MlTask> inspect(TaskId id) const;
  bool empty() const { return queued() == 0; }
  const PerfCounter& perf() const { return perf_; }
  const SchedulerConfig& config() const { return cfg_; }
  FpRegisters& fpu() { return fpu_; }
  /// Tasks that reached Done, in completion order.
  const std::vector<MlTask>& finished() const { return finished_; }
  void reset();

 private:
  friend class ExecutionContext;

  // Runs one timeslice. Returns true if the task finished.
  bool run_slice(MlTask& task);

  SchedulerConfig cfg_;
  mutable std::mutex mu_;
  std::map<std::pair<int, std::uint64_t>, MlTask> queue_;  // (priority, arrival) -> task
  std::set<TaskId> known_ids_;
  std::uint64_t arrivals_ = 0;
  PerfCounter perf_;
  FpRegisters fpu_{};
  std::vector<MlTask> finished_;
};

}  // namespace neurokernel::sched
