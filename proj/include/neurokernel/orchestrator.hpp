#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include "neurokernel/error.hpp"
#include "neurokernel/random.hpp"
#include "neurokernel/tensor.hpp"

namespace neurokernel::orch {

enum class Modality : std::uint8_t { Vision = 0, Audio = 1, Language = 2, Sensor = 3 };

inline constexpr Modality kAllModalities[] = {Modality::Vision, Modality::Audio, Modality::Language,
                                              Modality::Sensor};

const char* to_string(Modality m);
Result<Modality> modality_from_code(std::uint8_t code);
Result<Modality> parse_modality(std::string_view name);

enum class Liveness { Alive, Suspect, Failed };
const char* to_string(Liveness l);

enum class Qos : std::uint8_t { Realtime = 0, Bulk = 1 };

using NodeId = std::uint32_t;
inline constexpr NodeId kCoordinatorId = 0;

// ---------------------------------------------------------------------------
// Modality workers

struct ModalityOutput {
  Modality modality = Modality::Vision;
  std::string label;
  tensor::Tensor tensor;
};

/// Deterministic stand-in for a per-modality model: the label comes from a
/// fixed table keyed by the input tag, the tensor is the input's hash embedding.
Result<ModalityOutput> modality_process(Modality kind, std::string_view tag);
Result<ModalityOutput> modality_process(std::uint8_t raw_kind, std::string_view tag);

// ---------------------------------------------------------------------------
// Wire format

inline constexpr std::uint16_t kEnvelopeVersion = 1;
inline constexpr char kEnvelopeMagic[4] = {'N', 'K', 'E', '1'};
/// magic + version + qos + msg_id + source + dest + payload_len + crc
inline constexpr std::size_t kEnvelopeOverhead = 4 + 2 + 1 + 8 + 4 + 4 + 4 + 4;

std::uint32_t crc32(std::span<const std::byte> bytes);

struct MessageEnvelope {
  std::uint16_t version = kEnvelopeVersion;
  std::uint64_t msg_id = 0;
  Qos qos = Qos::Bulk;
  NodeId source = 0;
  NodeId dest = 0;
  std::vector<std::byte> payload;

  std::uint32_t checksum() const { return crc32(payload); }
  friend bool operator==(const MessageEnvelope&, const MessageEnvelope&) = default;
};

/// "NKE1" | version u16 | qos u8 | msg_id u64 | source u32 | dest u32 |
/// payload_len u32 | payload | crc32(payload) u32, little-endian.
std::vector<std::byte> encode_envelope(const MessageEnvelope& env);
Result<MessageEnvelope> decode_envelope(std::span<const std::byte> frame);

struct HeartbeatMsg {
  NodeId node = 0;
  std::uint64_t sequence = 0;
  std::uint64_t tick = 0;
  friend bool operator==(const HeartbeatMsg&, const HeartbeatMsg&) = default;
};

struct TaskMsg {
  std::uint64_t task_id = 0;
  Modality modality = Modality::Vision;
  std::string tag;
  friend bool operator==(const TaskMsg&, const TaskMsg&) = default;
};

struct ResultMsg {
  std::uint64_t task_id = 0;
  ModalityOutput output;
};

using Payload = std::variant<HeartbeatMsg, TaskMsg, ResultMsg>;

std::vector<std::byte> encode_payload(const Payload& p);
Result<Payload> decode_payload(std::span<const std::byte> bytes);
std::vector<std::byte> encode_tensor(const tensor::Tensor& t);
Result<tensor::Tensor> decode_tensor(std::span<const std::byte> bytes);

// ---------------------------------------------------------------------------
// Nodes

inline constexpr std::size_t kMetricWindow = 3;

struct MetricHistory {
  std::deque<double> cpu, mem, io;

  void push(double c, double m, double i);
  /// 0.5 cpu + 0.3 mem + 0.2 io over the moving averages; 0 with no samples.
  double predicted_load() const;
  friend bool operator==(const MetricHistory&, const MetricHistory&) = default;
};

/// Everything a checkpoint captures.
struct NodeState {
  std::set<Modality> modalities;
  std::vector<std::uint64_t> processed;            // msg ids, in processing order
  std::map<Modality, std::string> last_outputs;    // label per modality
  MetricHistory metrics;

  friend bool operator==(const NodeState&, const NodeState&) = default;
};

std::vector<std::byte> serialize_state(const NodeState& s);
Result<NodeState> deserialize_state(std::span<const std::byte> bytes);

struct Checkpoint {
  NodeId node = 0;
  std::uint64_t sequence = 0;
  std::vector<std::byte> snapshot;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct Node {
  NodeId id = 0;
  NodeState state;
  Liveness liveness = Liveness::Alive;
  bool silenced = false;
  std::deque<std::vector<std::byte>> realtime_inbox;
  std::deque<std::vector<std::byte>> bulk_inbox;
  std::uint64_t heartbeat_seq = 0;
  std::map<NodeId, Checkpoint> replicas;  // checkpoints held for peers
  Rng rng;

  bool supports(Modality m) const { return state.modalities.count(m) != 0; }
  std::size_t backlog() const { return realtime_inbox.size() + bulk_inbox.size(); }
};

// ---------------------------------------------------------------------------
// Cluster

struct ClusterConfig {
  std::uint64_t heartbeat_timeout = 3;
  std::uint64_t checkpoint_interval = 5;  // 0 disables periodic checkpoints
  std::size_t node_capacity = 4;          // messages a node handles per tick
  std::uint64_t seed = 0;
  bool threaded = false;                  // run node workers on threads each tick
};

struct Event {
  std::uint64_t tick = 0;
  std::string event;
  std::string detail;
  friend bool operator==(const Event&, const Event&) = default;
};

struct Assignment {
  NodeId node = 0;
  Modality modality = Modality::Vision;
  std::string tag;
  std::uint64_t dispatched_at = 0;
};

/// Simulated multi-node deployment stepped in logical ticks by one
/// coordinator. Nodes only talk to the coordinator through encoded envelopes.
class Cluster {
 public:
  explicit Cluster(ClusterConfig cfg = {});

  Status add_node(NodeId id, std::set<Modality> modalities);
  const Node* node(NodeId id) const;
  std::vector<NodeId> node_ids() const;
  std::uint64_t now() const { return tick_; }
  const ClusterConfig& config() const { return cfg_; }

  /// Route a modality input now through the balancer, or park it if no
  /// live node can take it.
  void submit_input(Modality m, std::string tag);
  void schedule_input(std::uint64_t tick, Modality m, std::string tag);
  void schedule_kill(std::uint64_t tick, NodeId id);
  /// Stop a node's heartbeats and processing from now on.
  Status silence(NodeId id);
  Status report_metrics(NodeId id, double cpu, double mem, double io);

  /// One tick: dispatch, node work + heartbeats, kills, coordinator drain,
  /// failure detection, periodic checkpoints.
  void step();
  void advance_clock() { ++tick_; }
  /// Every live node sends a heartbeat; the coordinator consumes them.
  void heartbeat_tick();
  /// Suspect after > timeout silent ticks, Failed after > 2 * timeout.
  /// Newly Failed nodes have their pending work re-routed.
  std::vector<NodeId> detect_failures(std::uint64_t timeout_ticks);

  Result<Checkpoint> checkpoint_node(NodeId id);
  Status restore_node(const Checkpoint& chk, std::optional<NodeId> target = std::nullopt);
  /// Most recent replica of `id`'s checkpoint held by a non-failed peer.
  std::optional<Checkpoint> latest_checkpoint(NodeId id) const;
  /// Restores the latest replica of `node` onto `target`; logged either way.
  Status restore_latest(NodeId node, NodeId target);

  Result<NodeId> balance_load(Modality m) const;

  const std::vector<Event>& events() const { return events_; }
  const std::map<std::uint64_t, Assignment>& pending() const { return pending_; }
  std::size_t backlog() const { return backlog_.size(); }
  /// Most recent output per modality, as received by the coordinator.
  const std::map<Modality, ModalityOutput>& latest_outputs() const { return latest_; }

 private:
  struct NodeWork {
    std::vector<std::vector<std::byte>> outgoing;
    std::vector<Event> events;
  };

  void log(std::string event, std::string detail);
  void send(NodeId dest, Qos qos, const Payload& payload);
  bool dispatch(std::uint64_t task_id, Modality m, const std::string& tag);
  NodeWork run_node(Node& n, bool heartbeat, bool process);
  void deliver_to_coordinator(std::vector<std::byte> frame);
  void drain_coordinator();
  void failover(NodeId failed);

  ClusterConfig cfg_;
  std::uint64_t tick_ = 0;
  std::map<NodeId, Node> nodes_;
  std::map<NodeId, std::uint64_t> last_heartbeat_tick_;
  std::map<NodeId, std::uint64_t> last_heartbeat_seq_;
  std::map<NodeId, std::uint64_t> checkpoint_seq_;
  std::deque<std::vector<std::byte>> coordinator_inbox_;
  std::multimap<std::uint64_t, std::pair<Modality, std::string>> scheduled_inputs_;
  std::multimap<std::uint64_t, NodeId> scheduled_kills_;
  std::map<std::uint64_t, Assignment> pending_;
  std::deque<std::uint64_t> backlog_;
  std::map<std::uint64_t, std::pair<Modality, std::string>> backlog_tasks_;
  std::map<Modality, ModalityOutput> latest_;
  std::vector<Event> events_;
  std::uint64_t next_msg_id_ = 1;
  std::uint64_t next_task_id_ = 1;
};

// Free-function spellings of the cluster operations.
inline void heartbeat_tick(Cluster& c) { c.heartbeat_tick(); }
inline std::vector<NodeId> detect_failures(Cluster& c, std::uint64_t timeout) { return c.detect_failures(timeout); }
inline Result<NodeId> balance_load(const Cluster& c, Modality m) { return c.balance_load(m); }

// ---------------------------------------------------------------------------
// Fusion and decision

struct FusedRepresentation {
  std::vector<ModalityOutput> outputs;  // Vision, Sensor, Audio, Language order
  std::string summary;
};

/// Later outputs for the same modality replace earlier ones.
Result<FusedRepresentation> fuse(const std::vector<ModalityOutput>& outputs);
std::string decide(const FusedRepresentation& fused);

// ---------------------------------------------------------------------------
// Scenario files

struct ScenarioNode {
  NodeId id;
  std::set<Modality> modalities;
};

struct ScenarioRestore {
  std::uint64_t tick;
  NodeId node;
  NodeId target;
};

struct Scenario {
  std::vector<ScenarioNode> nodes;
  std::vector<std::tuple<std::uint64_t, Modality, std::string>> inputs;
  std::vector<std::pair<std::uint64_t, NodeId>> kills;
  std::vector<ScenarioRestore> restores;
};

/// Lines: `node <id> <m1,m2,...>`, `input <tick> <modality> <tag>`,
/// `kill <tick> <node>`, `restore <tick> <node> [<as-node>]`. `#` starts a comment.
Result<Scenario> parse_scenario(std::string_view text);

struct ScenarioReport {
  std::vector<Event> events;
  std::string fused;
  std::string decision;
};

Result<ScenarioReport> run_scenario(const Scenario& scenario, std::uint64_t ticks, ClusterConfig cfg);

/// CSV with a tick,event,detail header; fused and decision close the log.
std::string report_csv(const ScenarioReport& report, std::uint64_t final_tick);

}  // namespace neurokernel::orch
