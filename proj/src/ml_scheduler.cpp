#include "neurokernel/ml_scheduler.hpp"

#include <algorithm>
#include <string>

namespace neurokernel::sched {

const char* to_string(TaskState s) {
  switch (s) {
    case TaskState::Queued:
      return "Queued";
    case TaskState::Running:
      return "Running";
    case TaskState::Preempted:
      return "Preempted";
    case TaskState::Done:
      return "Done";
  }
  return "?";
}

void ExecutionContext::charge(std::uint64_t cycles) {
  slice_used_ += cycles;
  task_cycles_ += cycles;
  sched_.perf_.charge(cycles);
}

void ExecutionContext::charge_multiply_adds(std::uint64_t n) { charge(n * kCyclesPerMultiplyAdd); }

void ExecutionContext::charge_allocations(std::uint64_t n) { charge(n * kCyclesPerAllocation); }

std::uint64_t ExecutionContext::slice_remaining() const {
  const auto q = sched_.cfg_.quantum;
  return slice_used_ >= q ? 0 : q - slice_used_;
}

FpRegisters& ExecutionContext::fpu() { return sched_.fpu_; }

Work synthetic_work(std::uint64_t cycles) {
  return [remaining = cycles](ExecutionContext& ctx) mutable {
    if (remaining == 0) return StepResult::Finished;
    const std::uint64_t burn = std::min(remaining, std::max<std::uint64_t>(ctx.slice_remaining(), 1));
    ctx.charge_multiply_adds(burn);
    remaining -= burn;
    return remaining == 0 ? StepResult::Finished : StepResult::Continue;
  };
}

SchedulerConfig SchedulerConfig::full_scale() {
  SchedulerConfig cfg;
  cfg.deprioritize_threshold = 1'000'000'000;
  return cfg;
}

Status validate(const SchedulerConfig& cfg) {
  if (cfg.deprioritize_threshold == 0 || cfg.batch_size == 0 || cfg.quantum == 0) {
    return make_error(ErrorKind::InvalidArgument, "scheduler threshold, batch_size and quantum must be positive");
  }
  return ok_status();
}

int adjust_scheduling(MlTask& task, std::uint64_t threshold) {
  if (task.runs > 0 && !task.penalized && task.consumed_cycles > threshold) {
    task.priority += kDeprioritizePenalty;
    task.penalized = true;
  }
  return task.priority;
}

MlScheduler::MlScheduler(SchedulerConfig cfg) : cfg_(cfg) {}

Status MlScheduler::enqueue(MlTask task) {
  if (task.state != TaskState::Queued) {
    return make_error(ErrorKind::InvalidArgument,
                      "task " + std::to_string(task.id) + " is " + to_string(task.state) + ", not Queued");
  }
  std::lock_guard lock(mu_);
  if (!known_ids_.insert(task.id).second) {
    return make_error(ErrorKind::InvalidArgument, "duplicate task id " + std::to_string(task.id));
  }
  const auto key = std::make_pair(task.priority, arrivals_++);
  queue_.emplace(key, std::move(task));
  return ok_status();
}

std::optional<MlTask> MlScheduler::dequeue() {
  std::lock_guard lock(mu_);
  if (queue_.empty()) return std::nullopt;
  auto node = queue_.extract(queue_.begin());
  return std::move(node.mapped());
}

std::size_t MlScheduler::queued() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

std::optional<MlTask> MlScheduler::inspect(TaskId id) const {
  std::lock_guard lock(mu_);
  for (const auto& [key, task] : queue_) {
    if (task.id == id) return task;
  }
  return std::nullopt;
}

Status MlScheduler::save_fp_context(MlTask& task) {
  if (task.state != TaskState::Running) {
    return make_error(ErrorKind::InvalidArgument, "save_fp_context needs a Running task");
  }
  task.fp_context = fpu_;
  return ok_status();
}

Status MlScheduler::restore_fp_context(MlTask& task) {
  if (task.state != TaskState::Preempted) {
    return make_error(ErrorKind::InvalidArgument, "restore_fp_context needs a Preempted task");
  }
  fpu_ = task.fp_context;
  return ok_status();
}

bool MlScheduler::run_slice(MlTask& task) {
  if (task.state == TaskState::Preempted) {
    (void)restore_fp_context(task);
  } else {
    fpu_.fill(0.0);
  }
  task.state = TaskState::Running;
  ++task.runs;

  std::uint64_t slice_used = 0;
  ExecutionContext ctx(*this, slice_used, task.consumed_cycles);
  while (true) {
    if (!task.work || task.work(ctx) == StepResult::Finished) {
      task.state = TaskState::Done;
      return true;
    }
    if (slice_used >= cfg_.quantum) {
      (void)save_fp_context(task);
      task.state = TaskState::Preempted;
      ++task.preemptions;
      return false;
    }
  }
}

Result<std::vector<TaskId>> MlScheduler::batch_execute(std::size_t n) {
  if (n == 0) return make_error(ErrorKind::InvalidArgument, "batch size must be >= 1");

  std::vector<MlTask> batch;
  {
    std::lock_guard lock(mu_);
    while (batch.size() < n && !queue_.empty()) {
      auto node = queue_.extract(queue_.begin());
      batch.push_back(std::move(node.mapped()));
    }
  }

  std::vector<TaskId> done;
  std::vector<MlTask> preempted;
  for (MlTask& task : batch) {
    const bool finished = run_slice(task);
    adjust_scheduling(task, cfg_.deprioritize_threshold);
    if (finished) {
      done.push_back(task.id);
      finished_.push_back(std::move(task));
    } else {
      preempted.push_back(std::move(task));
    }
  }

  std::lock_guard lock(mu_);
  for (MlTask& task : preempted) {
    const auto key = std::make_pair(task.priority, arrivals_++);
    queue_.emplace(key, std::move(task));
  }
  return done;
}

void MlScheduler::reset() {
  std::lock_guard lock(mu_);
  queue_.clear();
  known_ids_.clear();
  arrivals_ = 0;
  perf_.reset();
  fpu_.fill(0.0);
  finished_.clear();
}

}  // namespace neurokernel::sched
