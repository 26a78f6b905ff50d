// Acceptance gate: one line per criterion, nonzero exit on any failure.
#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>

#include "neurokernel/selftest.hpp"

namespace st = neurokernel::selftest;

namespace {

constexpr std::uint64_t kSeed = 0;

st::CriterionResult end_to_end() {
  st::CriterionResult r;
  r.id = 8;
  r.name = "end-to-end selftest";
  r.budget_seconds = st::kEndToEndBudgetSeconds;
  const auto start = std::chrono::steady_clock::now();
  const std::string cmd = std::string("'") + NEUROKERNEL_CLI + "' selftest --seed " + std::to_string(kSeed) + " 2>&1";
  std::string out;
  int status = -1;
  if (FILE* pipe = ::popen(cmd.c_str(), "r")) {
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
    status = ::pclose(pipe);
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool exited_zero = status != -1 && WIFEXITED(status) && WEXITSTATUS(status) == 0;
  const bool reported_pass = out.find("selftest: PASS") != std::string::npos;
  r.checks_passed = exited_zero && reported_pass;
  r.detail = std::string("exit ") + (exited_zero ? "0" : "nonzero") + ", summary " + (reported_pass ? "PASS" : "missing");
  return r;
}

}  // namespace

int main() {
  bool all = true;
  st::run_all(kSeed, [&](const st::CriterionResult& r) {
    std::cout << r.line() << std::endl;
    all = all && r.passed();
  });
  const auto e2e = end_to_end();
  std::cout << e2e.line() << std::endl;
  all = all && e2e.passed();
  std::cout << "acceptance: " << (all ? "PASS" : "FAIL") << std::endl;
  return all ? 0 : 1;
}
