#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "neurokernel/error.hpp"
#include "neurokernel/ml_memory.hpp"
#include "neurokernel/ml_scheduler.hpp"
#include "neurokernel/orchestrator.hpp"
#include "neurokernel/tensor.hpp"

namespace neurokernel {

inline constexpr const char* kConfigEnvVar = "NEUROKERNEL_CONFIG";

/// Tunables for every subsystem, loaded from `key = value` text.
///
/// Recognized keys: pool_bytes, block_bytes, large_page_classes (comma list),
/// block_size, worker_count, deprioritize_threshold, batch_size, quantum,
/// heartbeat_timeout, checkpoint_interval, node_capacity. Sizes accept K/M/G
/// suffixes (powers of 1024). `#` starts a comment.
struct Config {
  memory::PoolConfig pool;
  tensor::MatmulConfig matmul;
  sched::SchedulerConfig scheduler;
  orch::ClusterConfig cluster;

  /// Echo of the effective settings as `key=value` lines, sorted by key.
  std::string echo() const;
};

/// Unsigned count with an optional K/M/G suffix (powers of 1024); integral
/// scientific spellings such as 1e9 are accepted.
Result<std::uint64_t> parse_size(std::string_view text);

Result<Config> parse_config(std::string_view text);
Result<Config> load_config(const std::filesystem::path& path);

/// Explicit path wins; otherwise NEUROKERNEL_CONFIG; otherwise defaults.
Result<Config> resolve_config(const std::optional<std::string>& explicit_path);

}  // namespace neurokernel
