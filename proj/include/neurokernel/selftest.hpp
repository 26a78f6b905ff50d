#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace neurokernel::selftest {

/// Outcome of one acceptance criterion.
struct CriterionResult {
  int id = 0;
  std::string name;
  bool checks_passed = false;
  std::string detail;       // counts and the first failure, if any
  double seconds = 0.0;
  std::optional<double> budget_seconds;

  bool within_budget() const { return !budget_seconds || seconds < *budget_seconds; }
  bool passed() const { return checks_passed && within_budget(); }
  /// "criterion <id> <name>: PASS|FAIL (<detail>; <t> s [< budget s])"
  std::string line() const;
};

// Wall-clock budgets per criterion. Criteria 3 to 5 only share the end-to-end limit.
inline constexpr double kMatmulBudgetSeconds = 5.0;
inline constexpr double kAllocatorBudgetSeconds = 10.0;
inline constexpr double kOrchestratorBudgetSeconds = 10.0;
inline constexpr double kRababBudgetSeconds = 30.0;
inline constexpr double kEndToEndBudgetSeconds = 120.0;

// Scripted demo: three nodes, one killed after the inputs land.
inline constexpr const char* kDemoScenario =
    "# three-node demo\n"
    "node 1 vision,sensor\n"
    "node 2 audio,language\n"
    "node 3 vision,audio\n"
    "input 1 vision person\n"
    "input 1 sensor 3m\n"
    "input 2 audio help\n"
    "kill 4 1\n";
inline constexpr std::uint64_t kDemoTicks = 12;
inline constexpr const char* kDemoSummary = "A person is standing 3 meters away, asking for help";
inline constexpr const char* kDemoDecision = "Approach the person and respond verbally";

CriterionResult matmul_oracle(std::uint64_t seed);
CriterionResult allocator_soundness(std::uint64_t seed);
CriterionResult zero_copy(std::uint64_t seed);
CriterionResult accel_host_equality(std::uint64_t seed);
CriterionResult scheduler(std::uint64_t seed);
CriterionResult orchestrator(std::uint64_t seed);
CriterionResult rabab(std::uint64_t seed);

/// Criteria 1 to 7 in order. `on_result` sees each result as it completes.
std::vector<CriterionResult> run_all(std::uint64_t seed,
                                     const std::function<void(const CriterionResult&)>& on_result = {});

/// Bitwise reflected CRC-32 (polynomial 0xEDB88320), kept apart from the
/// table-driven codec path as a second route to the same value.
std::uint32_t crc32_bitwise(const unsigned char* data, std::size_t len);

}  // namespace neurokernel::selftest
