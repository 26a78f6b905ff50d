#include "neurokernel/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>
#include <unordered_map>

#include "neurokernel/accel_device.hpp"
#include "neurokernel/ml_memory.hpp"
#include "neurokernel/ml_scheduler.hpp"
#include "neurokernel/orchestrator.hpp"
#include "neurokernel/rabab.hpp"
#include "neurokernel/random.hpp"
#include "neurokernel/tensor.hpp"

namespace neurokernel::selftest {

namespace {

using Clock = std::chrono::steady_clock;

/// Collects check outcomes; keeps the first failure message.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (!ok) {
      ++failed_;
      if (first_failure_.empty()) first_failure_ = what;
    }
  }
  void note(std::string text) { notes_.push_back(std::move(text)); }
  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::ostringstream out;
    for (const auto& n : notes_) out << n << ", ";
    out << total_ - failed_ << "/" << total_ << " checks";
    if (!first_failure_.empty()) out << ", first failure: " << first_failure_;
    return out.str();
  }

 private:
  std::uint64_t total_ = 0;
  std::uint64_t failed_ = 0;
  std::string first_failure_;
  std::vector<std::string> notes_;
};

template <typename Body>
CriterionResult timed(int id, std::string name, std::optional<double> budget, Body body) {
  CriterionResult r;
  r.id = id;
  r.name = std::move(name);
  r.budget_seconds = budget;
  Checks checks;
  const auto start = Clock::now();
  body(checks);
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  r.checks_passed = checks.ok();
  r.detail = checks.summary();
  return r;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size_bytes()) == 0);
}

tensor::Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<double> data(rows * cols);
  // Mixed magnitudes make accumulation order visible in the low bits.
  for (double& v : data) v = uniform_real(rng, -1.0, 1.0) * std::ldexp(1.0, static_cast<int>(uniform_int(rng, -20, 20)));
  return *tensor::Tensor::create({rows, cols}, std::move(data));
}

}  // namespace

std::string CriterionResult::line() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(3);
  out << "criterion " << id << " " << name << ": " << (passed() ? "PASS" : "FAIL") << " (" << detail << "; "
      << seconds << " s";
  if (budget_seconds) out << (within_budget() ? " < " : " >= ") << *budget_seconds << " s budget";
  out << ")";
  return out.str();
}

std::uint32_t crc32_bitwise(const unsigned char* data, std::size_t len) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) {
    crc ^= data[i];
    for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

// 1 -------------------------------------------------------------------------

CriterionResult matmul_oracle(std::uint64_t seed) {
  return timed(1, "matmul-oracle", kMatmulBudgetSeconds, [&](Checks& c) {
    Rng rng(seed);
    constexpr std::size_t kPairs = 200;
    constexpr std::size_t kBlocks[] = {1, 2, 3, 8, 64};
    std::size_t comparisons = 0;
    for (std::size_t pair = 0; pair < kPairs; ++pair) {
      const auto m = static_cast<std::size_t>(uniform_int(rng, 1, 16));
      const auto k = static_cast<std::size_t>(uniform_int(rng, 1, 16));
      const auto n = static_cast<std::size_t>(uniform_int(rng, 1, 16));
      const auto a = random_tensor(rng, m, k);
      const auto b = random_tensor(rng, k, n);
      auto ref = tensor::matmul_naive(a, b);
      if (!ref) {
        c.expect(false, "naive failed: " + ref.error().message());
        continue;
      }
      const std::string tag = " pair " + std::to_string(pair) + " " + std::to_string(m) + "x" + std::to_string(k) +
                              "x" + std::to_string(n);
      for (std::size_t bs : kBlocks) {
        auto got = tensor::matmul_blocked(a, b, {bs, 1});
        c.expect(got && same_bits(got->data(), ref->data()), "blocked bs=" + std::to_string(bs) + tag);
        ++comparisons;
      }
      for (std::size_t w = 1; w <= tensor::kMaxWorkers; ++w) {
        auto got = tensor::matmul_parallel(a, b, {64, w});
        c.expect(got && same_bits(got->data(), ref->data()), "parallel workers=" + std::to_string(w) + tag);
        ++comparisons;
      }
    }
    c.note(std::to_string(kPairs) + " pairs, " + std::to_string(comparisons) + " bit comparisons");
  });
}

// 2 -------------------------------------------------------------------------

namespace {

/// Lowest start of `n` free blocks whose start is a multiple of `step`, by
/// scanning the bitmap directly.
std::optional<std::size_t> brute_force_fit(const std::vector<bool>& bits, std::size_t n, std::size_t step) {
  for (std::size_t start = 0; start + n <= bits.size(); start += step) {
    bool free = true;
    for (std::size_t i = start; i < start + n && free; ++i) free = !bits[i];
    if (free) return start;
  }
  return std::nullopt;
}

struct AllocRun {
  std::vector<long long> placements;  // first block per alloc op, -1 for OOM
};

AllocRun run_allocator_sequence(std::uint64_t seed, Checks& c) {
  constexpr std::size_t kOps = 10'000;
  memory::PoolConfig cfg;
  cfg.pool_bytes = 1 * memory::MiB;  // 256 blocks keeps OOM and fragmentation frequent
  cfg.block_bytes = 4096;
  cfg.large_page_classes = {16 * memory::KiB, 64 * memory::KiB};
  auto pool = memory::BlockPool::create(cfg);
  AllocRun run;
  if (!pool) {
    c.expect(false, "pool create: " + pool.error().message());
    return run;
  }
  const std::size_t total = cfg.pool_bytes / cfg.block_bytes;
  std::vector<long long> owner(total, -1);  // shadow ownership map
  std::vector<memory::BlockHandle> live;
  std::vector<memory::BlockHandle> dead;
  Rng rng(seed);
  std::size_t ooms = 0;

  for (std::size_t op = 0; op < kOps; ++op) {
    const std::string at = "op " + std::to_string(op);
    const bool do_alloc = live.empty() || uniform_index(rng, 100) < 55;
    if (do_alloc) {
      const bool large = uniform_index(rng, 100) < 15;
      std::size_t n = 0, step = 1;
      Result<memory::BlockHandle> h = make_error(ErrorKind::InvalidArgument);
      const auto bits = pool->bitmap();
      if (large) {
        const std::size_t cls = cfg.large_page_classes[uniform_index(rng, cfg.large_page_classes.size())];
        n = step = cls / cfg.block_bytes;
        h = pool->large_page_alloc(cls);
      } else {
        n = static_cast<std::size_t>(uniform_int(rng, 1, 24));
        h = pool->alloc(n);
      }
      const auto expected = brute_force_fit(bits, n, step);
      if (!expected) {
        c.expect(!h && h.error().kind == ErrorKind::OutOfMemory, at + ": expected OutOfMemory");
        run.placements.push_back(-1);
        ++ooms;
        continue;
      }
      c.expect(h.ok(), at + ": unexpected failure with a free run at " + std::to_string(*expected));
      if (!h) {
        run.placements.push_back(-1);
        continue;
      }
      c.expect(h->first_block == *expected && h->n_blocks == n, at + ": not first-fit");
      run.placements.push_back(static_cast<long long>(h->first_block));
      for (std::size_t i = h->first_block; i < h->first_block + h->n_blocks && i < total; ++i) {
        c.expect(owner[i] == -1, at + ": overlap at block " + std::to_string(i));
        owner[i] = static_cast<long long>(h->id);
      }
      auto bytes = pool->bytes(*h);
      c.expect(bytes.ok(), at + ": bytes() failed");
      if (bytes) {
        c.expect(std::all_of(bytes->begin(), bytes->end(), [](std::byte b) { return b == std::byte{0}; }),
                 at + ": fresh handle not zeroed");
        std::fill(bytes->begin(), bytes->end(), std::byte{0xA5});
      }
      live.push_back(*h);
    } else {
      const std::size_t pick = uniform_index(rng, live.size());
      const auto h = live[pick];
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(pick));
      c.expect(pool->free(h).ok(), at + ": free failed");
      for (std::size_t i = h.first_block; i < h.first_block + h.n_blocks; ++i) owner[i] = -1;
      dead.push_back(h);
      if (uniform_index(rng, 100) < 5) {
        const auto& stale = dead[uniform_index(rng, dead.size())];
        auto again = pool->free(stale);
        c.expect(!again && again.error().kind == ErrorKind::InvalidArgument, at + ": double free accepted");
      }
    }

    const auto stats = pool->stats();
    std::size_t live_blocks = 0;
    for (const auto& h : live) live_blocks += h.n_blocks;
    c.expect(stats.allocated_blocks + stats.free_blocks == stats.total_blocks && stats.total_blocks == total,
             at + ": conservation");
    c.expect(stats.allocated_blocks == live_blocks && stats.live_handles == live.size(), at + ": ledger count");
    const auto bits = pool->bitmap();
    bool agree = bits.size() == total;
    for (std::size_t i = 0; i < total && agree; ++i) agree = bits[i] == (owner[i] != -1);
    c.expect(agree, at + ": bitmap disagrees with shadow ownership");
  }

  // Foreign handles are refused.
  if (!live.empty()) {
    auto other = memory::BlockPool::create(cfg);
    if (other) {
      auto st = other->free(live.front());
      c.expect(!st && st.error().kind == ErrorKind::InvalidArgument, "foreign handle free accepted");
    }
  }
  c.note(std::to_string(kOps) + " ops, " + std::to_string(ooms) + " OOM");
  return run;
}

}  // namespace

CriterionResult allocator_soundness(std::uint64_t seed) {
  return timed(2, "allocator-soundness", kAllocatorBudgetSeconds, [&](Checks& c) {
    const AllocRun first = run_allocator_sequence(seed, c);
    Checks replay_checks;
    const AllocRun replay = run_allocator_sequence(seed, replay_checks);
    c.expect(first.placements == replay.placements, "replay placed blocks differently");
    c.note("replay identical: " + std::string(first.placements == replay.placements ? "yes" : "no"));
  });
}

// 3 -------------------------------------------------------------------------

CriterionResult zero_copy(std::uint64_t seed) {
  return timed(3, "zero-copy", std::nullopt, [&](Checks& c) {
    constexpr std::size_t kRoundTrips = 1000;
    auto buf = memory::SharedBuffer::create();
    if (!buf) {
      c.expect(false, "create: " + buf.error().message());
      return;
    }
    const auto writer = buf->view();
    const auto reader = buf->view();
    Rng rng(seed);
    std::vector<std::byte> payload;
    for (std::size_t i = 0; i < kRoundTrips; ++i) {
      const std::size_t offset = uniform_index(rng, buf->size());
      const std::size_t len = 1 + uniform_index(rng, std::min<std::size_t>(256, buf->size() - offset));
      payload.resize(len);
      for (auto& b : payload) b = static_cast<std::byte>(rng() & 0xff);
      const std::string at = "round trip " + std::to_string(i);
      c.expect(writer.write(offset, payload).ok(), at + ": write");
      auto got = reader.read(offset, len);
      c.expect(got && std::equal(got->begin(), got->end(), payload.begin(), payload.end()), at + ": mismatch");
      // The returned span must alias the storage the writer touched.
      auto raw = writer.mutable_bytes(offset, len);
      c.expect(raw && got && raw->data() == got->data(), at + ": read did not alias storage");
      c.expect(buf->copy_count() == 0, at + ": copy_count moved");
    }
    c.note(std::to_string(kRoundTrips) + " round trips, copy_count " + std::to_string(buf->copy_count()));
  });
}

// 4 -------------------------------------------------------------------------

CriterionResult accel_host_equality(std::uint64_t seed) {
  return timed(4, "accel-host-equality", std::nullopt, [&](Checks& c) {
    auto dev = accel::AccelDevice::create();
    if (!dev) {
      c.expect(false, "device create: " + dev.error().message());
      return;
    }
    constexpr std::size_t kMax = 8;
    constexpr std::size_t kTile = kMax * kMax * sizeof(double);
    auto ra = dev->allocate(kTile);
    auto rb = dev->allocate(kTile);
    auto rc = dev->allocate(kTile);
    if (!ra || !rb || !rc) {
      c.expect(false, "region allocation failed");
      return;
    }
    Rng rng(seed);
    std::size_t runs = 0;

    auto run_on_device = [&](accel::AccelOp op, const tensor::Tensor& a, const tensor::Tensor& b,
                             std::vector<std::size_t> out_shape) -> Result<tensor::Tensor> {
      NK_RETURN_IF_ERROR(dev->write_tensor(*ra, a));
      NK_RETURN_IF_ERROR(dev->write_tensor(*rb, b));
      auto id = dev->submit({op, {{*ra, a.shape()}, {*rb, b.shape()}}, *rc});
      if (!id) return id.error();
      auto done = dev->execute_next();
      if (!done) return done.error();
      if (*done != *id) return make_error(ErrorKind::InvalidArgument, "completed a different task");
      return dev->read_tensor(*rc, std::move(out_shape));
    };

    for (std::size_t n = 1; n <= kMax; ++n) {
      const auto eye = *tensor::Tensor::identity(n);
      const auto x = random_tensor(rng, n, n);
      for (const auto& [lhs, rhs] : {std::pair{&eye, &x}, std::pair{&x, &eye}, std::pair{&eye, &eye}}) {
        auto host = tensor::matmul_naive(*lhs, *rhs);
        auto got = run_on_device(accel::AccelOp::Matmul, *lhs, *rhs, {n, n});
        c.expect(host && got && same_bits(host->data(), got->data()), "identity matmul n=" + std::to_string(n));
        ++runs;
      }
    }
    for (std::size_t trial = 0; trial < 300; ++trial) {
      const auto m = static_cast<std::size_t>(uniform_int(rng, 1, kMax));
      const auto k = static_cast<std::size_t>(uniform_int(rng, 1, kMax));
      const auto n = static_cast<std::size_t>(uniform_int(rng, 1, kMax));
      const auto a = random_tensor(rng, m, k);
      const auto b = random_tensor(rng, k, n);
      auto host = tensor::matmul_naive(a, b);
      auto got = run_on_device(accel::AccelOp::Matmul, a, b, {m, n});
      c.expect(host && got && same_bits(host->data(), got->data()), "random matmul trial " + std::to_string(trial));
      const auto a2 = random_tensor(rng, m, n);
      const auto b2 = random_tensor(rng, m, n);
      auto hsum = tensor::elementwise_sum(a2, b2);
      auto dsum = run_on_device(accel::AccelOp::ElemwiseSum, a2, b2, {m, n});
      c.expect(hsum && dsum && same_bits(hsum->data(), dsum->data()), "elementwise sum trial " + std::to_string(trial));
      runs += 2;
    }

    // FIFO completion over 100 submissions.
    constexpr std::size_t kSubmissions = 100;
    const auto base = dev->completed().size();
    std::vector<accel::TaskId> submitted;
    const auto a = random_tensor(rng, 4, 4);
    c.expect(dev->write_tensor(*ra, a).ok() && dev->write_tensor(*rb, a).ok(), "fifo operand write");
    for (std::size_t i = 0; i < kSubmissions; ++i) {
      const auto op = (i % 3 == 0) ? accel::AccelOp::ElemwiseSum : accel::AccelOp::Matmul;
      auto id = dev->submit({op, {{*ra, {4, 4}}, {*rb, {4, 4}}}, *rc});
      c.expect(id.ok(), "fifo submit " + std::to_string(i));
      if (id) submitted.push_back(*id);
    }
    // A second execute while one is in flight must be refused.
    bool busy_seen = false;
    dev->set_in_flight_hook([&] {
      auto nested = dev->execute_next();
      busy_seen = !nested && nested.error().kind == ErrorKind::DeviceBusy;
    });
    std::vector<accel::TaskId> executed;
    for (std::size_t i = 0; i < kSubmissions; ++i) {
      auto id = dev->execute_next();
      if (id) executed.push_back(*id);
      if (i == 0) dev->set_in_flight_hook({});
    }
    c.expect(busy_seen, "in-flight execute was not DeviceBusy");
    c.expect(executed == submitted, "execution order differs from submission order");
    const auto all = dev->completed();
    c.expect(std::vector<accel::TaskId>(all.begin() + static_cast<std::ptrdiff_t>(base), all.end()) == submitted,
             "completion log differs from submission order");
    c.note(std::to_string(runs) + " device/host comparisons, " + std::to_string(kSubmissions) + " FIFO submissions");
  });
}

// 5 -------------------------------------------------------------------------

namespace {

/// Work that performs `steps` steps, each charging one allocation plus
/// `madds` multiply-adds.
sched::Work alloc_heavy_work(std::uint64_t steps, std::uint64_t madds) {
  return [steps, madds, done = std::uint64_t{0}](sched::ExecutionContext& ctx) mutable {
    ctx.charge_allocations(1);
    ctx.charge_multiply_adds(madds);
    return ++done == steps ? sched::StepResult::Finished : sched::StepResult::Continue;
  };
}

struct ReplayRun {
  std::uint64_t consumed_after = 0;
  bool finished = false;
  int priority_after = 0;
};

/// Cycle-by-cycle replay of a single task under the documented cost model:
/// one cycle per multiply-add, ten per allocation, the slice ends after the
/// step in which it reaches the quantum, and the penalty is applied once
/// after the first run that leaves consumed cycles above the threshold.
std::vector<ReplayRun> replay_single_task(std::uint64_t steps, std::uint64_t step_cycles, std::uint64_t quantum,
                                          std::uint64_t threshold) {
  std::vector<ReplayRun> runs;
  std::uint64_t consumed = 0, steps_done = 0;
  int priority = sched::kMlSchedPriority;
  bool penalized = false;
  while (true) {
    std::uint64_t slice = 0;
    bool finished = false;
    while (true) {
      for (std::uint64_t cyc = 0; cyc < step_cycles; ++cyc) {
        ++slice;
        ++consumed;
      }
      if (++steps_done == steps) {
        finished = true;
        break;
      }
      if (slice >= quantum) break;
    }
    if (!penalized && consumed > threshold) {
      priority += sched::kDeprioritizePenalty;
      penalized = true;
    }
    runs.push_back({consumed, finished, priority});
    if (finished) return runs;
  }
}

}  // namespace

CriterionResult scheduler(std::uint64_t seed) {
  return timed(5, "scheduler", std::nullopt, [&](Checks& c) {
    Rng rng(seed);

    // Priority-then-FIFO against a sort oracle, with interleaved dequeues.
    constexpr std::size_t kTaskSets = 1000;
    std::size_t dequeues = 0;
    for (std::size_t set = 0; set < kTaskSets; ++set) {
      sched::MlScheduler s;
      struct Entry {
        int priority;
        std::uint64_t arrival;
        sched::TaskId id;
      };
      std::vector<Entry> model;
      const std::size_t n = 1 + uniform_index(rng, 40);
      std::uint64_t arrival = 0;
      sched::TaskId next_id = 1;
      for (std::size_t step = 0; step < 2 * n; ++step) {
        const bool push = model.empty() || (next_id <= n && coin(rng));
        if (push && next_id <= n) {
          sched::MlTask t;
          t.id = next_id++;
          t.priority = static_cast<int>(uniform_int(rng, 0, 6));
          model.push_back({t.priority, arrival++, t.id});
          c.expect(s.enqueue(std::move(t)).ok(), "enqueue set " + std::to_string(set));
        } else if (!model.empty()) {
          auto sorted = model;
          std::stable_sort(sorted.begin(), sorted.end(),
                           [](const Entry& a, const Entry& b) { return a.priority < b.priority; });
          auto got = s.dequeue();
          c.expect(got && got->id == sorted.front().id, "dequeue order set " + std::to_string(set));
          model.erase(std::find_if(model.begin(), model.end(),
                                   [&](const Entry& e) { return e.id == sorted.front().id; }));
          ++dequeues;
        }
      }
      while (!model.empty()) {
        auto sorted = model;
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const Entry& a, const Entry& b) { return a.priority < b.priority; });
        auto got = s.dequeue();
        c.expect(got && got->id == sorted.front().id, "drain order set " + std::to_string(set));
        model.erase(std::find_if(model.begin(), model.end(), [&](const Entry& e) { return e.id == sorted.front().id; }));
        ++dequeues;
      }
      c.expect(!s.dequeue().has_value(), "queue not empty after drain");
    }

    // Deprioritization at the first threshold crossing.
    constexpr std::size_t kPenaltyTrials = 200;
    std::size_t crossings = 0;
    for (std::size_t trial = 0; trial < kPenaltyTrials; ++trial) {
      const std::uint64_t threshold = static_cast<std::uint64_t>(uniform_int(rng, 500, 20'000));
      const std::uint64_t quantum = static_cast<std::uint64_t>(uniform_int(rng, 50, 3'000));
      const std::uint64_t madds = static_cast<std::uint64_t>(uniform_int(rng, 0, 40));
      const std::uint64_t step_cycles = madds * sched::kCyclesPerMultiplyAdd + sched::kCyclesPerAllocation;
      const std::uint64_t steps = 1 + (threshold * static_cast<std::uint64_t>(uniform_int(rng, 1, 30)) / 10) / step_cycles;
      const auto oracle = replay_single_task(steps, step_cycles, quantum, threshold);

      sched::SchedulerConfig cfg;
      cfg.deprioritize_threshold = threshold;
      cfg.quantum = quantum;
      cfg.batch_size = 1;
      sched::MlScheduler s(cfg);
      sched::MlTask t;
      t.id = 1;
      t.work = alloc_heavy_work(steps, madds);
      c.expect(s.enqueue(std::move(t)).ok(), "penalty enqueue");
      const std::string at = "penalty trial " + std::to_string(trial);
      for (std::size_t run = 0; run < oracle.size(); ++run) {
        auto done = s.batch_execute(1);
        c.expect(done.ok(), at + ": batch_execute");
        const auto& want = oracle[run];
        std::optional<sched::MlTask> view =
            want.finished ? (s.finished().empty() ? std::nullopt : std::optional(s.finished().back())) : s.inspect(1);
        c.expect(view.has_value(), at + ": task missing after run " + std::to_string(run));
        if (!view) break;
        c.expect(view->consumed_cycles == want.consumed_after, at + ": consumed cycles after run " + std::to_string(run));
        c.expect(view->priority == want.priority_after, at + ": priority after run " + std::to_string(run));
        c.expect((view->state == sched::TaskState::Done) == want.finished, at + ": state after run " + std::to_string(run));
      }
      c.expect(s.empty() && s.finished().size() == 1, at + ": task did not drain");
      c.expect(s.perf().cpu_cycles() == steps * step_cycles, at + ": perf counter");
      if (oracle.back().priority_after != sched::kMlSchedPriority) ++crossings;
    }

    // FPU context survives randomized preemption points.
    constexpr std::size_t kPreemptionTrials = 100;
    std::size_t preemption_points = 0, fp_mismatches = 0;
    for (std::size_t trial = 0; trial < kPreemptionTrials; ++trial) {
      sched::SchedulerConfig cfg;
      cfg.quantum = static_cast<std::uint64_t>(uniform_int(rng, 20, 400));
      cfg.deprioritize_threshold = 1'000'000'000;
      sched::MlScheduler s(cfg);

      const std::size_t steps = static_cast<std::size_t>(uniform_int(rng, 4, 40));
      std::vector<std::uint64_t> costs(steps);
      for (auto& cost : costs) cost = static_cast<std::uint64_t>(uniform_int(rng, 1, static_cast<std::int64_t>(cfg.quantum)));
      // Guarantee at least one preemption.
      costs.front() = cfg.quantum;

      sched::MlTask probe;
      probe.id = 1;
      probe.work = [costs, step = std::size_t{0}, expected = sched::FpRegisters{}, local = Rng(rng()),
                    &fp_mismatches](sched::ExecutionContext& ctx) mutable {
        if (std::memcmp(ctx.fpu().data(), expected.data(), sizeof(expected)) != 0) ++fp_mismatches;
        for (std::size_t i = 0; i < sched::kFpSlots; ++i) {
          expected[i] = uniform_real(local, -1e6, 1e6);
          ctx.fpu()[i] = expected[i];
        }
        ctx.charge_multiply_adds(costs[step]);
        return ++step == costs.size() ? sched::StepResult::Finished : sched::StepResult::Continue;
      };
      sched::MlTask noise;
      noise.id = 2;
      noise.work = [local = Rng(rng())](sched::ExecutionContext& ctx) mutable {
        for (double& r : ctx.fpu()) r = uniform_real(local, -1.0, 1.0);
        ctx.charge_multiply_adds(ctx.slice_remaining());
        return sched::StepResult::Continue;
      };
      c.expect(s.enqueue(std::move(probe)).ok() && s.enqueue(std::move(noise)).ok(), "fp enqueue");
      bool probe_done = false;
      for (std::size_t round = 0; round < 10 * steps && !probe_done; ++round) {
        auto done = s.batch_execute(2);
        probe_done = done && std::find(done->begin(), done->end(), 1u) != done->end();
      }
      c.expect(probe_done, "fp trial " + std::to_string(trial) + ": probe never finished");
      if (!s.finished().empty()) preemption_points += s.finished().front().preemptions;
    }
    c.expect(fp_mismatches == 0, std::to_string(fp_mismatches) + " fp context mismatches");
    c.expect(preemption_points >= kPreemptionTrials, "fewer preemption points than trials");

    c.note(std::to_string(kTaskSets) + " task sets / " + std::to_string(dequeues) + " dequeues");
    c.note(std::to_string(kPenaltyTrials) + " replayed penalty runs (" + std::to_string(crossings) + " crossed)");
    c.note(std::to_string(preemption_points) + " fp preemption points");
  });
}

// 6 -------------------------------------------------------------------------

CriterionResult orchestrator(std::uint64_t seed) {
  return timed(6, "orchestrator", kOrchestratorBudgetSeconds, [&](Checks& c) {
    Rng rng(seed);

    constexpr std::size_t kFrames = 10'000;
    for (std::size_t i = 0; i < kFrames; ++i) {
      orch::MessageEnvelope env;
      env.version = static_cast<std::uint16_t>(uniform_int(rng, 0, orch::kEnvelopeVersion));
      env.msg_id = rng();
      env.qos = coin(rng) ? orch::Qos::Realtime : orch::Qos::Bulk;
      env.source = static_cast<orch::NodeId>(rng());
      env.dest = static_cast<orch::NodeId>(rng());
      env.payload.resize(uniform_index(rng, 257));
      for (auto& b : env.payload) b = static_cast<std::byte>(rng() & 0xff);
      const auto frame = orch::encode_envelope(env);
      auto back = orch::decode_envelope(frame);
      c.expect(frame.size() == orch::kEnvelopeOverhead + env.payload.size(), "frame size " + std::to_string(i));
      c.expect(back && *back == env, "round trip frame " + std::to_string(i));
      const auto crc = crc32_bitwise(reinterpret_cast<const unsigned char*>(env.payload.data()), env.payload.size());
      c.expect(crc == env.checksum(), "crc routes disagree on frame " + std::to_string(i));
    }

    orch::MessageEnvelope fixed;
    fixed.msg_id = 42;
    fixed.source = 1;
    fixed.dest = 2;
    fixed.payload.resize(64);
    for (auto& b : fixed.payload) b = static_cast<std::byte>(rng() & 0xff);
    const auto clean = orch::encode_envelope(fixed);
    constexpr std::size_t kPayloadOffset = orch::kEnvelopeOverhead - 4;
    std::size_t detected = 0;
    for (std::size_t bit = 0; bit < 64 * 8; ++bit) {
      auto corrupt = clean;
      corrupt[kPayloadOffset + bit / 8] ^= static_cast<std::byte>(1u << (bit % 8));
      auto got = orch::decode_envelope(corrupt);
      if (!got && got.error().kind == ErrorKind::ChecksumMismatch) ++detected;
    }
    c.expect(detected == 512, "detected " + std::to_string(detected) + "/512 single-bit flips");

    // Silenced at tick t (last heartbeat at t) must be Failed at t + 2T + 1.
    std::size_t latency_cases = 0;
    for (std::uint64_t timeout = 1; timeout <= 5; ++timeout) {
      for (std::uint64_t t = 1; t <= 8; ++t) {
        orch::ClusterConfig cfg;
        cfg.heartbeat_timeout = timeout;
        cfg.checkpoint_interval = 0;
        cfg.seed = seed;
        orch::Cluster cluster(cfg);
        c.expect(cluster.add_node(1, {orch::Modality::Vision}).ok() && cluster.add_node(2, {orch::Modality::Vision}).ok(),
                 "latency add_node");
        cluster.schedule_kill(t, 1);
        std::optional<std::uint64_t> suspect_at, failed_at;
        for (std::uint64_t tick = 1; tick <= t + 4 * timeout + 2; ++tick) {
          cluster.step();
          const auto l = cluster.node(1)->liveness;
          if (l == orch::Liveness::Suspect && !suspect_at) suspect_at = cluster.now();
          if (l == orch::Liveness::Failed && !failed_at) failed_at = cluster.now();
        }
        const std::string at = "timeout " + std::to_string(timeout) + " t " + std::to_string(t);
        c.expect(failed_at == t + 2 * timeout + 1, at + ": failed at wrong tick");
        c.expect(suspect_at == t + timeout + 1, at + ": suspect at wrong tick");
        c.expect(cluster.node(2)->liveness == orch::Liveness::Alive, at + ": healthy node disturbed");
        ++latency_cases;
      }
    }

    // checkpoint, mutate, restore
    {
      orch::ClusterConfig cfg;
      cfg.checkpoint_interval = 0;
      cfg.seed = seed;
      orch::Cluster cluster(cfg);
      c.expect(cluster.add_node(1, {orch::Modality::Vision, orch::Modality::Audio}).ok() &&
                   cluster.add_node(2, {orch::Modality::Language}).ok(),
               "checkpoint add_node");
      cluster.submit_input(orch::Modality::Vision, "person");
      cluster.step();
      auto chk = cluster.checkpoint_node(1);
      c.expect(chk.ok(), "checkpoint_node");
      if (chk) {
        cluster.submit_input(orch::Modality::Audio, "help");
        cluster.step();
        cluster.step();
        c.expect(orch::serialize_state(cluster.node(1)->state) != chk->snapshot, "mutation did not change state");
        c.expect(cluster.restore_node(*chk).ok(), "restore_node");
        c.expect(orch::serialize_state(cluster.node(1)->state) == chk->snapshot, "restored state differs");
        const auto* replica_holder = cluster.node(2);
        c.expect(replica_holder->replicas.count(1) == 1, "checkpoint not replicated to peer");
      }
    }

    // Scripted demo
    {
      auto sc = orch::parse_scenario(kDemoScenario);
      c.expect(sc.ok(), "demo scenario parse");
      if (sc) {
        orch::ClusterConfig cfg;
        cfg.seed = seed;
        auto report = orch::run_scenario(*sc, kDemoTicks, cfg);
        c.expect(report && report->fused == kDemoSummary, "demo summary");
        c.expect(report && report->decision == kDemoDecision, "demo decision");
      }
    }
    c.note(std::to_string(kFrames) + " frames, 512 bit flips, " + std::to_string(latency_cases) + " latency cases");
  });
}

// 7 -------------------------------------------------------------------------

namespace {

/// Applies a path straight to a framebuffer, one op at a time.
Status interpret_path(const rabab::TransformPath& path, rabab::Framebuffer& fb) {
  long long ox = 0, oy = 0;
  for (const auto& op : path) {
    if (const auto* t = std::get_if<rabab::Translate>(&op)) {
      ox += t->dx;
      oy += t->dy;
    } else if (const auto* d = std::get_if<rabab::DrawPixel>(&op)) {
      const long long x = d->x + ox, y = d->y + oy;
      if (x < 0 || y < 0 || x >= fb.width() || y >= fb.height()) return make_error(ErrorKind::InvalidArgument);
      fb.set(static_cast<int>(x), static_cast<int>(y), d->color);
    }
  }
  return ok_status();
}

}  // namespace

CriterionResult rabab(std::uint64_t seed) {
  return timed(7, "rabab", kRababBudgetSeconds, [&](Checks& c) {
    Rng rng(seed);

    // EvenNumberDetector learning loop.
    {
      rabab::RababEngine engine;
      c.expect(engine.register_predicate("EvenNumberDetector", rabab::even_number_rule()).ok(), "register");
      double prev = engine.find_predicate("EvenNumberDetector")->confidence();
      bool monotone = true;
      for (int i = 0; i < 50; ++i) {
        const auto n = uniform_int(rng, -1'000'000, 1'000'000);
        auto p = engine.evolve_predicate("EvenNumberDetector", n, n % 2 == 0);
        if (!p) {
          monotone = false;
          break;
        }
        monotone = monotone && p->confidence() >= prev;
        prev = p->confidence();
      }
      c.expect(monotone, "confidence sequence not monotone");
      c.expect(prev == 51.0 / 52.0, "final confidence is not 51/52");
    }

    // Knowledge-graph convergence against the geometric closed form.
    {
      constexpr double kTolerance = 1e-3;
      for (int trial = 0; trial < 100; ++trial) {
        rabab::KnowledgeGraph g;
        const double target = uniform_unit(rng);
        double w = 0.0;
        std::size_t steps_needed = 0;
        for (int step = 1; step <= 100; ++step) {
          auto got = g.evolve("a", "b", target);
          if (!got) break;
          w = *got;
          const double closed = target * (1.0 - std::pow(1.0 - rabab::kGraphLearningRate, step));
          c.expect(std::abs(w - closed) < 1e-12, "graph weight departs from closed form");
          c.expect(w >= 0.0 && w <= 1.0, "graph weight outside [0,1]");
          if (steps_needed == 0 && std::abs(w - target) < kTolerance) steps_needed = static_cast<std::size_t>(step);
        }
        c.expect(std::abs(w - target) < kTolerance && steps_needed > 0, "graph did not converge in 100 updates");
      }
      rabab::KnowledgeGraph g;
      for (int i = 0; i < 2000; ++i) {
        auto w = g.evolve("s" + std::to_string(uniform_index(rng, 4)), "o" + std::to_string(uniform_index(rng, 4)),
                          uniform_unit(rng));
        c.expect(w && *w >= 0.0 && *w <= 1.0, "random graph update left [0,1]");
      }
    }

    // Cosine similarity properties.
    {
      for (int i = 0; i < 1000; ++i) {
        std::vector<double> a(rabab::kEmbeddingDim), b(rabab::kEmbeddingDim);
        for (auto& v : a) v = uniform_real(rng, -1.0, 1.0);
        for (auto& v : b) v = uniform_real(rng, -1.0, 1.0);
        const double k = uniform_real(rng, 0.01, 100.0);
        std::vector<double> ka(a);
        for (auto& v : ka) v *= k;
        auto ab = rabab::cosine_similarity(a, b);
        auto ba = rabab::cosine_similarity(b, a);
        auto kab = rabab::cosine_similarity(ka, b);
        c.expect(ab && ba && *ab == *ba, "cosine not symmetric");
        c.expect(ab && *ab >= -1.0 && *ab <= 1.0, "cosine out of bounds");
        c.expect(ab && kab && std::abs(*ab - *kab) <= 1e-12, "cosine not scale invariant");
      }
    }

    // Linear resources: every double consume fails.
    {
      std::size_t double_consumes = 0, programs_with_error = 0;
      for (int program = 0; program < 1000; ++program) {
        rabab::RababEngine engine;
        struct Held {
          rabab::LinearResource res;
          std::string payload;
          bool consumed = false;
        };
        std::vector<Held> handles;
        std::size_t allocs = 0, consumes = 0, caught = 0, attempted = 0;
        const std::size_t ops = 5 + uniform_index(rng, 40);
        auto try_consume = [&](std::size_t idx) {
          auto& [res, payload, consumed] = handles[idx];
          auto got = engine.consume_linear(res);
          if (consumed) {
            ++attempted;
            if (!got && got.error().kind == ErrorKind::ResourceConsumed) ++caught;
          } else {
            c.expect(got && *got == payload, "first consume failed");
            consumed = true;
            ++consumes;
          }
        };
        for (std::size_t op = 0; op < ops; ++op) {
          if (handles.empty() || coin(rng)) {
            std::string payload = "payload-" + std::to_string(rng() % 1000);
            handles.push_back({engine.allocate_linear(payload), payload, false});
            ++allocs;
          } else {
            try_consume(uniform_index(rng, handles.size()));
          }
        }
        if (attempted == 0) {
          // Every program exercises reuse at least once.
          try_consume(0);
          try_consume(0);
        }
        const auto report = engine.shutdown();
        c.expect(report.leaked == allocs - consumes && report.allocated == allocs && report.consumed == consumes,
                 "leak ledger off in program " + std::to_string(program));
        double_consumes += attempted;
        if (attempted > 0 && caught == attempted) ++programs_with_error;
      }
      c.expect(programs_with_error == 1000, std::to_string(programs_with_error) + "/1000 programs rejected reuse");
      c.note(std::to_string(double_consumes) + " double consumes");
    }

    // Path canonicalization against a direct interpreter.
    {
      constexpr int kSide = 8;
      const rabab::Rgb red = rabab::kRed, black = rabab::kBlack, blue{0, 0, 255};
      const std::vector<rabab::PathOp> generators = {
          rabab::Identity{},
          rabab::Translate{1, 0},
          rabab::Translate{-1, 0},
          rabab::Translate{0, 1},
          rabab::DrawPixel{0, 0, red},
          rabab::DrawPixel{0, 0, black},
          rabab::DrawPixel{1, 0, red},
          rabab::DrawPixel{7, 7, red},
      };
      std::vector<rabab::TransformPath> paths{{}};
      for (std::size_t begin = 0, len = 1; len <= 4; ++len) {
        const std::size_t end = paths.size();
        for (std::size_t i = begin; i < end; ++i) {
          for (const auto& g : generators) {
            auto p = paths[i];
            p.push_back(g);
            paths.push_back(std::move(p));
          }
        }
        begin = end;
      }

      // Every pixel's final value is either untouched or the last color
      // written to it, so constant fills in each palette color separate any
      // two paths with different effects. Random states add a second probe.
      std::vector<rabab::Framebuffer> states;
      for (rabab::Rgb fill : {red, black, blue}) states.emplace_back(kSide, kSide, fill);
      for (int i = 0; i < 8; ++i) {
        rabab::Framebuffer fb(kSide, kSide);
        const rabab::Rgb palette[] = {red, black, blue};
        for (int y = 0; y < kSide; ++y)
          for (int x = 0; x < kSide; ++x) fb.set(x, y, palette[uniform_index(rng, 3)]);
        states.push_back(std::move(fb));
      }

      auto signature = [&](const rabab::TransformPath& p) -> std::optional<std::string> {
        std::string sig;
        for (auto fb : states) {
          if (!interpret_path(p, fb).ok()) return std::nullopt;
          sig += fb.to_ppm();
        }
        return sig;
      };

      std::vector<std::optional<std::string>> sigs;
      std::vector<std::optional<std::string>> canon;
      std::map<std::string, std::string> canon_to_sig, sig_to_canon;
      bool partition_agrees = true;
      for (const auto& p : paths) {
        auto sig = signature(p);
        auto cp = rabab::canonicalize_path(p, kSide, kSide);
        c.expect(sig.has_value() == cp.ok(), "bounds disagreement on " + rabab::to_string(p));
        sigs.push_back(sig);
        canon.push_back(cp ? std::optional(rabab::to_string(*cp)) : std::nullopt);
        if (!sig || !cp) continue;
        auto again = rabab::canonicalize_path(*cp, kSide, kSide);
        c.expect(again && *again == *cp, "canonicalize not idempotent on " + rabab::to_string(p));
        const auto key = *canon.back();
        auto [it1, fresh1] = canon_to_sig.emplace(key, *sig);
        auto [it2, fresh2] = sig_to_canon.emplace(*sig, key);
        if (it1->second != *sig || it2->second != key) {
          partition_agrees = false;
          c.expect(false, "canonical classes differ from effect classes at " + rabab::to_string(p));
        }
      }
      c.expect(partition_agrees, "canonical partition differs from effect partition");

      // Direct pairwise checks through paths_equivalent.
      std::unordered_map<std::string, std::vector<std::size_t>> by_sig;
      for (std::size_t i = 0; i < paths.size(); ++i) {
        if (sigs[i]) by_sig[*sigs[i]].push_back(i);
      }
      std::size_t pairs = 0, equivalent_pairs = 0;
      auto check_pair = [&](std::size_t i, std::size_t j) {
        auto eq = rabab::paths_equivalent(paths[i], paths[j], kSide, kSide);
        if (!sigs[i] || !sigs[j]) {
          c.expect(!eq, "out-of-bounds pair reported comparable");
          return;
        }
        const bool oracle = *sigs[i] == *sigs[j];
        c.expect(eq && *eq == oracle,
                 "paths_equivalent wrong on " + rabab::to_string(paths[i]) + " vs " + rabab::to_string(paths[j]));
        ++pairs;
        if (oracle) ++equivalent_pairs;
      };
      const std::size_t short_paths = 1 + 8 + 64;
      for (std::size_t i = 0; i < short_paths; ++i)
        for (std::size_t j = 0; j < short_paths; ++j) check_pair(i, j);
      for (int k = 0; k < 50'000; ++k) {
        const std::size_t i = uniform_index(rng, paths.size());
        std::size_t j = uniform_index(rng, paths.size());
        if (sigs[i] && coin(rng)) {
          const auto& mates = by_sig[*sigs[i]];
          j = mates[uniform_index(rng, mates.size())];
        }
        check_pair(i, j);
      }
      c.note(std::to_string(paths.size()) + " paths, " + std::to_string(canon_to_sig.size()) + " effect classes, " +
             std::to_string(pairs) + " pairs (" + std::to_string(equivalent_pairs) + " equivalent)");
    }
  });
}

std::vector<CriterionResult> run_all(std::uint64_t seed, const std::function<void(const CriterionResult&)>& on_result) {
  using Fn = CriterionResult (*)(std::uint64_t);
  constexpr Fn kCriteria[] = {matmul_oracle, allocator_soundness, zero_copy, accel_host_equality,
                              scheduler,     orchestrator,        rabab};
  std::vector<CriterionResult> results;
  for (Fn fn : kCriteria) {
    results.push_back(fn(seed));
    if (on_result) on_result(results.back());
  }
  return results;
}

}  // namespace neurokernel::selftest
