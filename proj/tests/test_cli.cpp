#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

struct Run {
  int exit_code = -1;
  std::string out;
};

// Runs the CLI through the shell; stderr is merged when `merge_err` is set.
Run run(const std::string& args, bool merge_err = false, const std::string& env = "") {
  std::string cmd = env + " '" NEUROKERNEL_CLI "' " + args + (merge_err ? " 2>&1" : " 2>/dev/null");
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

TEST(Cli, Compute) {
  auto ok = run("compute --a 6 --b 3 --op div");
  EXPECT_EQ(ok.exit_code, 0);
  EXPECT_EQ(ok.out, "2\n");
  auto bad = run("compute --a 1 --b 0 --op div", true);
  EXPECT_EQ(bad.exit_code, 1);
  EXPECT_NE(bad.out.find("InvalidArgument"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("frobnicate").exit_code, 2);
  EXPECT_EQ(run("compute --a 1").exit_code, 2);
  EXPECT_EQ(run("").exit_code, 2);
}

TEST(Cli, DeterministicOutputs) {
  auto a = run("rabab-demo --iterations 20 --seed 3");
  auto b = run("rabab-demo --iterations 20 --seed 3");
  EXPECT_EQ(a.exit_code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out.rfind("iteration,confidence\n0,0.5\n", 0), 0u);

  const std::string scn = std::string("--scenario '") + NEUROKERNEL_DATA_DIR + "/scenarios/demo.scn' --ticks 12";
  auto o1 = run("orchestrate " + scn);
  auto o2 = run("orchestrate " + scn + " --threaded");
  EXPECT_EQ(o1.exit_code, 0);
  EXPECT_EQ(o1.out, o2.out);
  EXPECT_NE(o1.out.find("12,decision,Approach the person and respond verbally"), std::string::npos);

  auto m1 = run("matmul-bench --n 24 --block 8 --workers 3 --no-timing");
  auto m2 = run("matmul-bench --n 24 --block 8 --workers 3 --no-timing");
  EXPECT_EQ(m1.exit_code, 0);
  EXPECT_EQ(m1.out, m2.out);
}

TEST(Cli, Demos) {
  const std::string data = NEUROKERNEL_DATA_DIR;
  auto pool = run("pool-demo --ops '" + data + "/pool/demo.ops'");
  EXPECT_EQ(pool.exit_code, 0);
  EXPECT_EQ(pool.out.rfind("0600ffff00", 0), 0u);  // blocks 1,2 live; 64K page on blocks 16..31
  const auto bad_ops = std::filesystem::temp_directory_path() / "nk_bad.ops";
  std::ofstream(bad_ops) << "free 5\n";
  EXPECT_EQ(run("pool-demo --ops '" + bad_ops.string() + "'").exit_code, 1);
  std::filesystem::remove(bad_ops);

  auto accel = run("accel-demo --n 6 --seed 1");
  EXPECT_EQ(accel.exit_code, 0);
  EXPECT_NE(accel.out.find("device==host: true"), std::string::npos);

  auto sched = run("sched-sim --tasks '" + data + "/sched/demo.tasks' --quantum 1000");
  EXPECT_EQ(sched.exit_code, 0);
  EXPECT_EQ(sched.out.rfind("order,id,final_priority,consumed_cycles,runs,preemptions\n", 0), 0u);

  auto draw = run("rabab-draw --intent 'pixel:1,0,#ff0000' --width 2 --height 1");
  EXPECT_EQ(draw.exit_code, 0);
  EXPECT_EQ(draw.out, "P3\n2 1\n255\n0 0 0 255 0 0\n");
}

TEST(Cli, ConfigSources) {
  const auto path = std::filesystem::temp_directory_path() / "nk_cli_test.conf";
  std::ofstream(path) << "quantum = 77\n";
  auto explicit_cfg = run("--config '" + path.string() + "' compute --a 1 --b 1 --op add", true);
  EXPECT_EQ(explicit_cfg.exit_code, 0);
  EXPECT_NE(explicit_cfg.out.find("quantum=77"), std::string::npos);
  auto env_cfg = run("compute --a 1 --b 1 --op add", true, "NEUROKERNEL_CONFIG='" + path.string() + "'");
  EXPECT_NE(env_cfg.out.find("quantum=77"), std::string::npos);
  EXPECT_EQ(run("--config /nonexistent/nk.conf compute --a 1 --b 1 --op add").exit_code, 2);
  std::filesystem::remove(path);
}

}  // namespace
