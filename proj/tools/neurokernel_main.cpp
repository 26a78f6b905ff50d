// neurokernel: command-line driver for every subsystem.
//
// CSV and other reports go to stdout, diagnostics to stderr.
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "neurokernel/accel_device.hpp"
#include "neurokernel/compute.hpp"
#include "neurokernel/config.hpp"
#include "neurokernel/ml_memory.hpp"
#include "neurokernel/ml_scheduler.hpp"
#include "neurokernel/orchestrator.hpp"
#include "neurokernel/rabab.hpp"
#include "neurokernel/random.hpp"
#include "neurokernel/selftest.hpp"
#include "neurokernel/tensor.hpp"

namespace nk = neurokernel;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

int fail(const nk::KernelError& e) {
  std::cerr << "error: " << e.message() << "\n";
  return kExitDomain;
}

int usage_error(const std::string& what) {
  std::cerr << "usage error: " << what << "\n";
  return kExitUsage;
}

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

/// Shortest round-trip decimal form.
std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

std::string strip_comment(std::string line) {
  if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
  return line;
}

// compute -------------------------------------------------------------------

struct ComputeArgs {
  std::int64_t a = 0;
  std::int64_t b = 0;
  std::string op;
};

int run_compute(const ComputeArgs& args) {
  auto op = nk::compute::opcode_from_name(args.op);
  if (!op) return usage_error("--op must be one of add, sub, mul, div");
  auto r = nk::compute::simple_compute(args.a, args.b, *op);
  if (!r) return fail(r.error());
  std::cout << *r << "\n";
  return kExitOk;
}

// matmul-bench --------------------------------------------------------------

struct BenchArgs {
  std::size_t n = 128;
  std::optional<std::size_t> block;
  std::optional<std::size_t> workers;
  std::size_t trials = 3;
  std::uint64_t seed = 0;
  bool no_timing = false;
};

std::string bits_checksum(std::span<const double> data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : data) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int run_matmul_bench(const BenchArgs& args, const nk::Config& cfg) {
  nk::tensor::MatmulConfig mc = cfg.matmul;
  if (args.block) mc.block_size = *args.block;
  if (args.workers) mc.worker_count = *args.workers;
  if (auto st = nk::tensor::validate(mc); !st) return fail(st.error());
  if (args.n == 0 || args.trials == 0) return usage_error("--n and --trials must be at least 1");

  nk::Rng rng(args.seed);
  auto make = [&] {
    std::vector<double> data(args.n * args.n);
    for (double& v : data) v = nk::uniform_real(rng, -1.0, 1.0);
    return nk::tensor::Tensor::create({args.n, args.n}, std::move(data));
  };
  auto a = make();
  auto b = make();
  if (!a) return fail(a.error());
  if (!b) return fail(b.error());

  using Variant = nk::Result<nk::tensor::Tensor> (*)(const nk::tensor::Tensor&, const nk::tensor::Tensor&,
                                                      const nk::tensor::MatmulConfig&);
  const std::pair<const char*, Variant> variants[] = {
      {"naive", [](const nk::tensor::Tensor& x, const nk::tensor::Tensor& y, const nk::tensor::MatmulConfig&) {
         return nk::tensor::matmul_naive(x, y);
       }},
      {"blocked", nk::tensor::matmul_blocked},
      {"parallel", nk::tensor::matmul_parallel},
  };

  std::cout << "variant,n,block,workers,nanos,checksum\n";
  for (const auto& [name, fn] : variants) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    std::string checksum;
    for (std::size_t t = 0; t < args.trials; ++t) {
      const auto start = std::chrono::steady_clock::now();
      auto out = fn(*a, *b, mc);
      const auto nanos =
          std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
      if (!out) return fail(out.error());
      best = std::min<std::int64_t>(best, nanos);
      checksum = bits_checksum(out->data());
    }
    std::cout << name << ',' << args.n << ',' << mc.block_size << ',' << mc.worker_count << ','
              << (args.no_timing ? 0 : best) << ',' << checksum << "\n";
  }
  return kExitOk;
}

// pool-demo -----------------------------------------------------------------

int run_pool_demo(const std::string& ops_path, const nk::Config& cfg) {
  auto text = read_file(ops_path);
  if (!text) return usage_error("cannot read ops file '" + ops_path + "'");
  auto pool = nk::memory::BlockPool::create(cfg.pool);
  if (!pool) return fail(pool.error());

  std::map<std::uint64_t, nk::memory::BlockHandle> handles;
  std::istringstream in(*text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto f = split_ws(strip_comment(raw));
    if (f.empty()) continue;
    const std::string where = ops_path + ":" + std::to_string(line_no) + ": ";
    if (f.size() != 2) return usage_error(where + "expected `alloc N`, `free K` or `lpage C`");
    auto arg = nk::parse_size(f[1]);
    if (!arg) return usage_error(where + arg.error().detail);
    if (f[0] == "alloc" || f[0] == "lpage") {
      auto h = f[0] == "alloc" ? pool->alloc(*arg) : pool->large_page_alloc(*arg);
      if (!h) return fail(nk::make_error(h.error().kind, where + h.error().detail));
      handles[h->id] = *h;
      std::cerr << "handle " << h->id << ": blocks " << h->first_block << ".." << h->first_block + h->n_blocks - 1
                << "\n";
    } else if (f[0] == "free") {
      auto it = handles.find(*arg);
      if (it == handles.end()) return fail(nk::make_error(nk::ErrorKind::InvalidArgument, where + "unknown handle " + f[1]));
      if (auto st = pool->free(it->second); !st) return fail(nk::make_error(st.error().kind, where + st.error().detail));
    } else {
      return usage_error(where + "unknown op '" + f[0] + "'");
    }
  }
  const auto stats = pool->stats();
  std::cerr << "blocks: " << stats.allocated_blocks << " allocated, " << stats.free_blocks << " free of "
            << stats.total_blocks << "\n";
  std::cout << pool->bitmap_hex() << "\n";
  return kExitOk;
}

// accel-demo ----------------------------------------------------------------

int run_accel_demo(std::size_t n, std::uint64_t seed) {
  if (n == 0) return usage_error("--n must be at least 1");
  auto dev = nk::accel::AccelDevice::create();
  if (!dev) return fail(dev.error());
  auto eye = nk::tensor::Tensor::identity(n);
  if (!eye) return fail(eye.error());
  nk::Rng rng(seed);
  std::vector<double> data(n * n);
  for (double& v : data) v = nk::uniform_real(rng, -1.0, 1.0);
  auto x = nk::tensor::Tensor::create({n, n}, std::move(data));
  if (!x) return fail(x.error());

  const std::size_t bytes = n * n * sizeof(double);
  auto ra = dev->allocate(bytes);
  if (!ra) return fail(ra.error());
  auto rb = dev->allocate(bytes);
  if (!rb) return fail(rb.error());
  auto rc = dev->allocate(bytes);
  if (!rc) return fail(rc.error());
  if (auto st = dev->write_tensor(*ra, *eye); !st) return fail(st.error());
  if (auto st = dev->write_tensor(*rb, *x); !st) return fail(st.error());
  auto id = dev->submit({nk::accel::AccelOp::Matmul, {{*ra, {n, n}}, {*rb, {n, n}}}, *rc});
  if (!id) return fail(id.error());
  if (auto done = dev->execute_next(); !done) return fail(done.error());
  auto device = dev->read_tensor(*rc, {n, n});
  if (!device) return fail(device.error());
  auto host = nk::tensor::matmul_naive(*eye, *x);
  if (!host) return fail(host.error());

  const bool equal = std::memcmp(device->data().data(), host->data().data(), bytes) == 0;
  std::cout << "device==host: " << (equal ? "true" : "false") << "\n";
  return equal ? kExitOk : kExitDomain;
}

// sched-sim -----------------------------------------------------------------

struct SchedArgs {
  std::string tasks;
  std::optional<std::uint64_t> threshold;
  std::optional<std::uint64_t> quantum;
  std::optional<std::size_t> batch;
};

int run_sched_sim(const SchedArgs& args, const nk::Config& cfg) {
  nk::sched::SchedulerConfig sc = cfg.scheduler;
  if (args.threshold) sc.deprioritize_threshold = *args.threshold;
  if (args.quantum) sc.quantum = *args.quantum;
  if (args.batch) sc.batch_size = *args.batch;
  if (auto st = nk::sched::validate(sc); !st) return fail(st.error());

  auto text = read_file(args.tasks);
  if (!text) return usage_error("cannot read tasks file '" + args.tasks + "'");
  nk::sched::MlScheduler sched(sc);
  std::istringstream in(*text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto f = split_ws(strip_comment(raw));
    if (f.empty()) continue;
    const std::string where = args.tasks + ":" + std::to_string(line_no) + ": ";
    std::uint64_t id = 0, cycles = 0;
    int prio = 0;
    auto num = [](const std::string& s, auto& out) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
      return ec == std::errc() && p == s.data() + s.size();
    };
    if (f.size() != 6 || f[0] != "task" || f[2] != "prio" || f[4] != "cycles" || !num(f[1], id) ||
        !num(f[3], prio) || !num(f[5], cycles)) {
      return usage_error(where + "expected `task <id> prio <p> cycles <c>`");
    }
    nk::sched::MlTask t;
    t.id = id;
    t.priority = prio;
    t.work = nk::sched::synthetic_work(cycles);
    if (auto st = sched.enqueue(std::move(t)); !st) return fail(nk::make_error(st.error().kind, where + st.error().detail));
  }

  std::size_t batches = 0;
  while (!sched.empty()) {
    auto done = sched.batch_execute(sc.batch_size);
    if (!done) return fail(done.error());
    ++batches;
  }
  std::cerr << "batches: " << batches << ", cpu_cycles: " << sched.perf().cpu_cycles() << "\n";
  std::cout << "order,id,final_priority,consumed_cycles,runs,preemptions\n";
  std::size_t order = 0;
  for (const auto& t : sched.finished()) {
    std::cout << ++order << ',' << t.id << ',' << t.priority << ',' << t.consumed_cycles << ',' << t.runs << ','
              << t.preemptions << "\n";
  }
  return kExitOk;
}

// orchestrate ---------------------------------------------------------------

struct OrchArgs {
  std::string scenario;
  std::uint64_t ticks = 20;
  std::uint64_t seed = 0;
  bool threaded = false;
};

int run_orchestrate(const OrchArgs& args, const nk::Config& cfg) {
  auto text = read_file(args.scenario);
  if (!text) return usage_error("cannot read scenario '" + args.scenario + "'");
  auto sc = nk::orch::parse_scenario(*text);
  if (!sc) return fail(sc.error());
  nk::orch::ClusterConfig cc = cfg.cluster;
  cc.seed = args.seed;
  cc.threaded = args.threaded;
  auto report = nk::orch::run_scenario(*sc, args.ticks, cc);
  if (!report) return fail(report.error());
  std::cout << nk::orch::report_csv(*report, args.ticks);
  return kExitOk;
}

// rabab ---------------------------------------------------------------------

int run_rabab_demo(std::size_t iterations, std::uint64_t seed) {
  nk::rabab::RababEngine engine;
  const std::string name = "EvenNumberDetector";
  if (auto st = engine.register_predicate(name, nk::rabab::even_number_rule()); !st) return fail(st.error());
  nk::Rng rng(seed);
  std::cout << "iteration,confidence\n";
  std::cout << 0 << ',' << format_double(engine.find_predicate(name)->confidence()) << "\n";
  for (std::size_t i = 1; i <= iterations; ++i) {
    const auto n = nk::uniform_int(rng, -1'000'000, 1'000'000);
    auto p = engine.evolve_predicate(name, n, n % 2 == 0);
    if (!p) return fail(p.error());
    std::cout << i << ',' << format_double(p->confidence()) << "\n";
  }
  return kExitOk;
}

int run_rabab_draw(const std::vector<std::string>& intents, int width, int height) {
  if (width <= 0 || height <= 0) return usage_error("--width and --height must be positive");
  nk::rabab::Framebuffer fb(width, height);
  for (const auto& text : intents) {
    auto intent = nk::rabab::parse_intent(text);
    if (!intent) return fail(intent.error());
    if (auto st = nk::rabab::interpret_intent(*intent, fb); !st) return fail(st.error());
  }
  std::cout << fb.to_ppm();
  return kExitOk;
}

// selftest ------------------------------------------------------------------

int run_selftest(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  bool all = true;
  nk::selftest::run_all(seed, [&](const nk::selftest::CriterionResult& r) {
    std::cout << r.line() << std::endl;
    all = all && r.passed();
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "selftest: " << (all ? "PASS" : "FAIL") << " (seed " << seed << ", " << seconds << " s)\n";
  return all ? kExitOk : kExitDomain;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neurokernel: ML-aware kernel subsystem simulator"};
  app.require_subcommand(1);
  std::optional<std::string> config_path;
  app.add_option("--config", config_path, "key=value config file (fallback: $NEUROKERNEL_CONFIG)");

  ComputeArgs compute_args;
  auto* compute = app.add_subcommand("compute", "checked integer arithmetic");
  compute->add_option("--a", compute_args.a)->required();
  compute->add_option("--b", compute_args.b)->required();
  compute->add_option("--op", compute_args.op, "add|sub|mul|div")->required();

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("matmul-bench", "time naive, blocked and parallel matmul");
  bench->add_option("--n", bench_args.n, "matrix dimension");
  bench->add_option("--block", bench_args.block, "tile size");
  bench->add_option("--workers", bench_args.workers, "threads (1..8)");
  bench->add_option("--trials", bench_args.trials, "runs per variant; the fastest is reported");
  bench->add_option("--seed", bench_args.seed);
  bench->add_flag("--no-timing", bench_args.no_timing, "report nanos as 0 for reproducible output");

  std::string ops_path;
  auto* pool = app.add_subcommand("pool-demo", "replay an alloc/free/lpage script");
  pool->add_option("--ops", ops_path, "op script")->required();

  std::size_t accel_n = 8;
  std::uint64_t accel_seed = 0;
  auto* accel = app.add_subcommand("accel-demo", "identity matmul on the simulated device");
  accel->add_option("--n", accel_n, "matrix dimension");
  accel->add_option("--seed", accel_seed);

  SchedArgs sched_args;
  auto* sched = app.add_subcommand("sched-sim", "run a task script through the ML scheduler");
  sched->add_option("--tasks", sched_args.tasks, "task script")->required();
  sched->add_option("--threshold", sched_args.threshold, "deprioritize threshold in cycles");
  sched->add_option("--quantum", sched_args.quantum, "timeslice in cycles");
  sched->add_option("--batch", sched_args.batch, "tasks per batch");

  OrchArgs orch_args;
  auto* orchestrate = app.add_subcommand("orchestrate", "run a cluster scenario");
  orchestrate->add_option("--scenario", orch_args.scenario, "scenario file")->required();
  orchestrate->add_option("--ticks", orch_args.ticks, "logical ticks to simulate");
  orchestrate->add_option("--seed", orch_args.seed);
  orchestrate->add_flag("--threaded", orch_args.threaded, "run node workers on threads");

  std::size_t iterations = 50;
  std::uint64_t rabab_seed = 0;
  auto* rabab_demo = app.add_subcommand("rabab-demo", "EvenNumberDetector learning loop");
  rabab_demo->add_option("--iterations", iterations);
  rabab_demo->add_option("--seed", rabab_seed);

  std::vector<std::string> intents;
  int width = nk::rabab::Framebuffer::kDefaultWidth, height = nk::rabab::Framebuffer::kDefaultHeight;
  auto* draw = app.add_subcommand("rabab-draw", "render intents to a PPM image");
  draw->add_option("--intent", intents, "pixel:x,y,#RRGGBB (repeatable)")->required();
  draw->add_option("--width", width);
  draw->add_option("--height", height);

  std::uint64_t selftest_seed = 0;
  auto* selftest = app.add_subcommand("selftest", "run the acceptance property suite");
  selftest->add_option("--seed", selftest_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  auto cfg = nk::resolve_config(config_path);
  if (!cfg) return usage_error(cfg.error().message());
  {
    std::istringstream echo(cfg->echo());
    std::string line = "# config:";
    for (std::string kv; std::getline(echo, kv);) line += " " + kv;
    std::cerr << line << "\n";
  }

  if (*compute) return run_compute(compute_args);
  if (*bench) return run_matmul_bench(bench_args, *cfg);
  if (*pool) return run_pool_demo(ops_path, *cfg);
  if (*accel) return run_accel_demo(accel_n, accel_seed);
  if (*sched) return run_sched_sim(sched_args, *cfg);
  if (*orchestrate) return run_orchestrate(orch_args, *cfg);
  if (*rabab_demo) return run_rabab_demo(iterations, rabab_seed);
  if (*draw) return run_rabab_draw(intents, width, height);
  if (*selftest) return run_selftest(selftest_seed);
  return usage_error("no subcommand");
}
