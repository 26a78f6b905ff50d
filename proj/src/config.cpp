#include "neurokernel/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace neurokernel {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Result<std::uint64_t> parse_size(std::string_view text) {
  std::string s = trim(text);
  std::uint64_t scale = 1;
  if (!s.empty()) {
    switch (s.back()) {
      case 'K': case 'k': scale = 1ull << 10; break;
      case 'M': case 'm': scale = 1ull << 20; break;
      case 'G': case 'g': scale = 1ull << 30; break;
      default: break;
    }
    if (scale != 1) s.pop_back();
  }
  // Plain scientific spellings such as 1e9 are accepted for cycle counts.
  if (s.find_first_of("eE") != std::string::npos) {
    double d = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
    if (ec != std::errc() || p != s.data() + s.size() || d < 0 || d > 1.8e19 || d != static_cast<double>(static_cast<std::uint64_t>(d))) {
      return make_error(ErrorKind::InvalidArgument, "bad number '" + std::string(text) + "'");
    }
    return static_cast<std::uint64_t>(d) * scale;
  }
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    return make_error(ErrorKind::InvalidArgument, "bad number '" + std::string(text) + "'");
  }
  if (v > UINT64_MAX / scale) return make_error(ErrorKind::Overflow, "size '" + std::string(text) + "' too large");
  return v * scale;
}

std::string Config::echo() const {
  std::map<std::string, std::string> kv;
  kv["pool_bytes"] = std::to_string(pool.pool_bytes);
  kv["block_bytes"] = std::to_string(pool.block_bytes);
  std::string classes;
  for (std::size_t c : pool.large_page_classes) classes += (classes.empty() ? "" : ",") + std::to_string(c);
  kv["large_page_classes"] = classes;
  kv["block_size"] = std::to_string(matmul.block_size);
  kv["worker_count"] = std::to_string(matmul.worker_count);
  kv["deprioritize_threshold"] = std::to_string(scheduler.deprioritize_threshold);
  kv["batch_size"] = std::to_string(scheduler.batch_size);
  kv["quantum"] = std::to_string(scheduler.quantum);
  kv["heartbeat_timeout"] = std::to_string(cluster.heartbeat_timeout);
  kv["checkpoint_interval"] = std::to_string(cluster.checkpoint_interval);
  kv["node_capacity"] = std::to_string(cluster.node_capacity);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

Result<Config> parse_config(std::string_view text) {
  Config cfg;
  using Setter = std::function<Status(std::uint64_t)>;
  auto set = [](auto& field) -> Setter {
    return [&field](std::uint64_t v) {
      field = static_cast<std::remove_reference_t<decltype(field)>>(v);
      return ok_status();
    };
  };
  const std::map<std::string, Setter, std::less<>> scalars{
      {"pool_bytes", set(cfg.pool.pool_bytes)},
      {"block_bytes", set(cfg.pool.block_bytes)},
      {"block_size", set(cfg.matmul.block_size)},
      {"worker_count", set(cfg.matmul.worker_count)},
      {"deprioritize_threshold", set(cfg.scheduler.deprioritize_threshold)},
      {"batch_size", set(cfg.scheduler.batch_size)},
      {"quantum", set(cfg.scheduler.quantum)},
      {"heartbeat_timeout", set(cfg.cluster.heartbeat_timeout)},
      {"checkpoint_interval", set(cfg.cluster.checkpoint_interval)},
      {"node_capacity", set(cfg.cluster.node_capacity)},
  };

  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto where = "config line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) return make_error(ErrorKind::InvalidArgument, where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "large_page_classes") {
      cfg.pool.large_page_classes.clear();
      std::stringstream list(value);
      for (std::string item; std::getline(list, item, ',');) {
        auto v = parse_size(item);
        if (!v) return make_error(v.error().kind, where + v.error().detail);
        cfg.pool.large_page_classes.push_back(*v);
      }
      continue;
    }
    auto it = scalars.find(key);
    if (it == scalars.end()) return make_error(ErrorKind::InvalidArgument, where + "unknown key '" + key + "'");
    auto v = parse_size(value);
    if (!v) return make_error(v.error().kind, where + v.error().detail);
    NK_RETURN_IF_ERROR(it->second(*v));
  }

  NK_RETURN_IF_ERROR(memory::validate(cfg.pool));
  NK_RETURN_IF_ERROR(tensor::validate(cfg.matmul));
  NK_RETURN_IF_ERROR(sched::validate(cfg.scheduler));
  if (cfg.cluster.heartbeat_timeout == 0) {
    return make_error(ErrorKind::InvalidArgument, "heartbeat_timeout must be at least 1");
  }
  if (cfg.cluster.node_capacity == 0) return make_error(ErrorKind::InvalidArgument, "node_capacity must be at least 1");
  return cfg;
}

Result<Config> load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return make_error(ErrorKind::InvalidArgument, "cannot read config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

Result<Config> resolve_config(const std::optional<std::string>& explicit_path) {
  if (explicit_path) return load_config(*explicit_path);
  if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') return load_config(env);
  return Config{};
}

}  // namespace neurokernel
