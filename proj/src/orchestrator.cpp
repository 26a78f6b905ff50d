#include "neurokernel/orchestrator.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <numeric>
#include <sstream>
#include <thread>

#include "neurokernel/rabab.hpp"
#include "wire.hpp"

namespace neurokernel::orch {

namespace {

enum class PayloadKind : std::uint8_t { Heartbeat = 1, Task = 2, Result = 3 };

constexpr double kLoadWeightCpu = 0.5;
constexpr double kLoadWeightMem = 0.3;
constexpr double kLoadWeightIo = 0.2;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double mean(const std::deque<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

Qos qos_for(Modality m) {
  return (m == Modality::Vision || m == Modality::Sensor) ? Qos::Realtime : Qos::Bulk;
}

std::string modality_list(const std::set<Modality>& ms) {
  std::string out;
  for (Modality m : ms) {
    if (!out.empty()) out += '+';
    out += to_string(m);
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
bool parse_uint(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

const char* to_string(Modality m) {
  switch (m) {
    case Modality::Vision:
      return "vision";
    case Modality::Audio:
      return "audio";
    case Modality::Language:
      return "language";
    case Modality::Sensor:
      return "sensor";
  }
  return "?";
}

Result<Modality> modality_from_code(std::uint8_t code) {
  if (code > static_cast<std::uint8_t>(Modality::Sensor)) {
    return make_error(ErrorKind::InvalidArgument, "unknown modality code " + std::to_string(code));
  }
  return static_cast<Modality>(code);
}

Result<Modality> parse_modality(std::string_view name) {
  for (Modality m : kAllModalities) {
    if (name == to_string(m)) return m;
  }
  return make_error(ErrorKind::InvalidArgument, "unknown modality '" + std::string(name) + "'");
}

const char* to_string(Liveness l) {
  switch (l) {
    case Liveness::Alive:
      return "alive";
    case Liveness::Suspect:
      return "suspect";
    case Liveness::Failed:
      return "failed";
  }
  return "?";
}

// Modality workers ----------------------------------------------------------

Result<ModalityOutput> modality_process(Modality kind, std::string_view tag) {
  if (tag.empty()) return make_error(ErrorKind::InvalidArgument, "empty modality input");
  std::string label;
  switch (kind) {
    case Modality::Vision:
      label = std::string(tag);
      break;
    case Modality::Sensor: {
      // Range readings look like "<number>m".
      const bool is_range = tag.size() > 1 && tag.back() == 'm' &&
                            std::all_of(tag.begin(), tag.end() - 1,
                                        [](char c) { return (c >= '0' && c <= '9') || c == '.'; });
      label = (is_range ? "distance=" : "reading=") + std::string(tag);
      break;
    }
    case Modality::Audio:
      if (tag == "help") {
        label = "asking for help";
      } else if (tag == "hello") {
        label = "saying hello";
      } else if (tag == "silence") {
        label = "silent";
      } else {
        label = "saying " + std::string(tag);
      }
      break;
    case Modality::Language:
      if (tag == "help") {
        label = "requesting assistance";
      } else {
        label = "text " + std::string(tag);
      }
      break;
    default:
      return make_error(ErrorKind::InvalidArgument, "unknown modality");
  }
  auto emb = rabab::embed(tag);
  if (!emb) return emb.error();
  auto values = emb->values();
  auto t = tensor::Tensor::create({values.size()}, std::vector<double>(values.begin(), values.end()));
  if (!t) return t.error();
  return ModalityOutput{kind, std::move(label), std::move(*t)};
}

Result<ModalityOutput> modality_process(std::uint8_t raw_kind, std::string_view tag) {
  auto m = modality_from_code(raw_kind);
  if (!m) return m.error();
  return modality_process(*m, tag);
}

// Wire format ---------------------------------------------------------------

std::uint32_t crc32(std::span<const std::byte> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large inputs in pieces.
  while (!bytes.empty()) {
    const std::size_t n = std::min<std::size_t>(bytes.size(), 1u << 30);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n));
    bytes = bytes.subspan(n);
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::byte> encode_envelope(const MessageEnvelope& env) {
  wire::Writer w;
  w.buffer().reserve(kEnvelopeOverhead + env.payload.size());
  for (char c : kEnvelopeMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(env.version);
  w.u8(static_cast<std::uint8_t>(env.qos));
  w.u64(env.msg_id);
  w.u32(env.source);
  w.u32(env.dest);
  w.u32(static_cast<std::uint32_t>(env.payload.size()));
  w.bytes(env.payload);
  w.u32(env.checksum());
  return w.take();
}

Result<MessageEnvelope> decode_envelope(std::span<const std::byte> frame) {
  auto truncated = [] { return make_error(ErrorKind::InvalidArgument, "truncated frame"); };
  if (frame.size() < kEnvelopeOverhead) return truncated();
  for (int i = 0; i < 4; ++i) {
    if (frame[i] != static_cast<std::byte>(kEnvelopeMagic[i])) {
      return make_error(ErrorKind::InvalidArgument, "bad magic");
    }
  }
  wire::Reader r(frame.subspan(4));
  MessageEnvelope env;
  std::uint8_t qos = 0;
  std::uint32_t len = 0;
  if (!r.u16(env.version) || !r.u8(qos) || !r.u64(env.msg_id) || !r.u32(env.source) || !r.u32(env.dest) ||
      !r.u32(len)) {
    return truncated();
  }
  if (env.version > kEnvelopeVersion) {
    return make_error(ErrorKind::InvalidArgument, "frame version " + std::to_string(env.version) +
                                                      " is newer than " + std::to_string(kEnvelopeVersion));
  }
  if (qos > static_cast<std::uint8_t>(Qos::Bulk)) return make_error(ErrorKind::InvalidArgument, "bad qos");
  env.qos = static_cast<Qos>(qos);
  std::span<const std::byte> payload;
  std::uint32_t crc = 0;
  if (!r.bytes(len, payload) || !r.u32(crc)) return truncated();
  if (r.remaining() != 0) return make_error(ErrorKind::InvalidArgument, "trailing bytes after frame");
  if (crc32(payload) != crc) return make_error(ErrorKind::ChecksumMismatch, "payload crc mismatch");
  env.payload.assign(payload.begin(), payload.end());
  return env;
}

std::vector<std::byte> encode_tensor(const tensor::Tensor& t) {
  wire::Writer w;
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (double v : t.data()) w.f64(v);
  return w.take();
}

namespace {

bool read_tensor(wire::Reader& r, tensor::Tensor& out, KernelError& err) {
  std::uint8_t rank = 0;
  if (!r.u8(rank) || rank == 0 || rank > 2) {
    err = make_error(ErrorKind::InvalidArgument, "bad tensor rank");
    return false;
  }
  std::vector<std::size_t> shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    std::uint32_t v = 0;
    if (!r.u32(v)) {
      err = make_error(ErrorKind::InvalidArgument, "truncated tensor");
      return false;
    }
    d = v;
    count *= v;
  }
  if (count > r.remaining() / 8) {
    err = make_error(ErrorKind::InvalidArgument, "truncated tensor data");
    return false;
  }
  std::vector<double> data(count);
  for (double& v : data) r.f64(v);
  auto t = tensor::Tensor::create(std::move(shape), std::move(data));
  if (!t) {
    err = t.error();
    return false;
  }
  out = std::move(*t);
  return true;
}

}  // namespace

Result<tensor::Tensor> decode_tensor(std::span<const std::byte> bytes) {
  wire::Reader r(bytes);
  tensor::Tensor t;
  KernelError err{ErrorKind::InvalidArgument, {}};
  if (!read_tensor(r, t, err)) return err;
  if (r.remaining() != 0) return make_error(ErrorKind::InvalidArgument, "trailing bytes after tensor");
  return t;
}

std::vector<std::byte> encode_payload(const Payload& p) {
  wire::Writer w;
  if (const auto* hb = std::get_if<HeartbeatMsg>(&p)) {
    w.u8(static_cast<std::uint8_t>(PayloadKind::Heartbeat));
    w.u32(hb->node);
    w.u64(hb->sequence);
    w.u64(hb->tick);
  } else if (const auto* task = std::get_if<TaskMsg>(&p)) {
    w.u8(static_cast<std::uint8_t>(PayloadKind::Task));
    w.u64(task->task_id);
    w.u8(static_cast<std::uint8_t>(task->modality));
    w.str(task->tag);
  } else {
    const auto& res = std::get<ResultMsg>(p);
    w.u8(static_cast<std::uint8_t>(PayloadKind::Result));
    w.u64(res.task_id);
    w.u8(static_cast<std::uint8_t>(res.output.modality));
    w.str(res.output.label);
    w.bytes(encode_tensor(res.output.tensor));
  }
  return w.take();
}

Result<Payload> decode_payload(std::span<const std::byte> bytes) {
  wire::Reader r(bytes);
  auto bad = [] { return make_error(ErrorKind::InvalidArgument, "malformed payload"); };
  std::uint8_t kind = 0;
  if (!r.u8(kind)) return bad();
  Payload out;
  switch (static_cast<PayloadKind>(kind)) {
    case PayloadKind::Heartbeat: {
      HeartbeatMsg hb;
      if (!r.u32(hb.node) || !r.u64(hb.sequence) || !r.u64(hb.tick)) return bad();
      out = hb;
      break;
    }
    case PayloadKind::Task: {
      TaskMsg t;
      std::uint8_t m = 0;
      if (!r.u64(t.task_id) || !r.u8(m) || !r.str(t.tag)) return bad();
      auto mod = modality_from_code(m);
      if (!mod) return mod.error();
      t.modality = *mod;
      out = std::move(t);
      break;
    }
    case PayloadKind::Result: {
      ResultMsg res;
      std::uint8_t m = 0;
      if (!r.u64(res.task_id) || !r.u8(m) || !r.str(res.output.label)) return bad();
      auto mod = modality_from_code(m);
      if (!mod) return mod.error();
      res.output.modality = *mod;
      KernelError err{ErrorKind::InvalidArgument, {}};
      if (!read_tensor(r, res.output.tensor, err)) return err;
      out = std::move(res);
      break;
    }
    default:
      return bad();
  }
  if (r.remaining() != 0) return bad();
  return out;
}

// Node state ----------------------------------------------------------------

void MetricHistory::push(double c, double m, double i) {
  auto add = [](std::deque<double>& xs, double v) {
    xs.push_back(v);
    while (xs.size() > kMetricWindow) xs.pop_front();
  };
  add(cpu, c);
  add(mem, m);
  add(io, i);
}

double MetricHistory::predicted_load() const {
  return kLoadWeightCpu * mean(cpu) + kLoadWeightMem * mean(mem) + kLoadWeightIo * mean(io);
}

std::vector<std::byte> serialize_state(const NodeState& s) {
  wire::Writer w;
  std::uint8_t mask = 0;
  for (Modality m : s.modalities) mask |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(m));
  w.u8(mask);
  w.u32(static_cast<std::uint32_t>(s.processed.size()));
  for (std::uint64_t id : s.processed) w.u64(id);
  w.u32(static_cast<std::uint32_t>(s.last_outputs.size()));
  for (const auto& [m, label] : s.last_outputs) {
    w.u8(static_cast<std::uint8_t>(m));
    w.str(label);
  }
  for (const auto* series : {&s.metrics.cpu, &s.metrics.mem, &s.metrics.io}) {
    w.u8(static_cast<std::uint8_t>(series->size()));
    for (double v : *series) w.f64(v);
  }
  return w.take();
}

Result<NodeState> deserialize_state(std::span<const std::byte> bytes) {
  wire::Reader r(bytes);
  auto bad = [] { return make_error(ErrorKind::InvalidArgument, "malformed node snapshot"); };
  NodeState s;
  std::uint8_t mask = 0;
  if (!r.u8(mask) || mask > 0x0f) return bad();
  for (Modality m : kAllModalities) {
    if (mask & (1u << static_cast<unsigned>(m))) s.modalities.insert(m);
  }
  std::uint32_t n = 0;
  if (!r.u32(n) || n > r.remaining() / 8) return bad();
  s.processed.resize(n);
  for (auto& id : s.processed) r.u64(id);
  if (!r.u32(n)) return bad();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint8_t m = 0;
    std::string label;
    if (!r.u8(m) || !r.str(label)) return bad();
    auto mod = modality_from_code(m);
    if (!mod) return bad();
    s.last_outputs[*mod] = std::move(label);
  }
  for (auto* series : {&s.metrics.cpu, &s.metrics.mem, &s.metrics.io}) {
    std::uint8_t count = 0;
    if (!r.u8(count) || count > kMetricWindow) return bad();
    for (std::uint8_t i = 0; i < count; ++i) {
      double v = 0;
      if (!r.f64(v)) return bad();
      series->push_back(v);
    }
  }
  if (r.remaining() != 0) return bad();
  return s;
}

// Cluster -------------------------------------------------------------------

Cluster::Cluster(ClusterConfig cfg) : cfg_(cfg) {}

void Cluster::log(std::string event, std::string detail) {
  events_.push_back(Event{tick_, std::move(event), std::move(detail)});
}

Status Cluster::add_node(NodeId id, std::set<Modality> modalities) {
  if (id == kCoordinatorId) return make_error(ErrorKind::InvalidArgument, "node id 0 is the coordinator");
  if (nodes_.count(id)) return make_error(ErrorKind::InvalidArgument, "node " + std::to_string(id) + " exists");
  Node n;
  n.id = id;
  n.state.modalities = std::move(modalities);
  n.rng.seed(cfg_.seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(id) + 1)));
  log("node_join", "node=" + std::to_string(id) + " modalities=" + modality_list(n.state.modalities));
  nodes_.emplace(id, std::move(n));
  last_heartbeat_tick_[id] = tick_;
  return ok_status();
}

const Node* Cluster::node(NodeId id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

std::vector<NodeId> Cluster::node_ids() const {
  std::vector<NodeId> ids;
  for (const auto& [id, n] : nodes_) ids.push_back(id);
  return ids;
}

Status Cluster::silence(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) return make_error(ErrorKind::InvalidArgument, "unknown node " + std::to_string(id));
  it->second.silenced = true;
  log("kill", "node=" + std::to_string(id));
  return ok_status();
}

Status Cluster::report_metrics(NodeId id, double cpu, double mem, double io) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) return make_error(ErrorKind::InvalidArgument, "unknown node " + std::to_string(id));
  for (double v : {cpu, mem, io}) {
    if (!(v >= 0.0 && v <= 1.0)) return make_error(ErrorKind::InvalidArgument, "metrics must lie in [0, 1]");
  }
  it->second.state.metrics.push(cpu, mem, io);
  return ok_status();
}

Result<NodeId> Cluster::balance_load(Modality m) const {
  std::optional<NodeId> best;
  double best_load = 0.0;
  for (const auto& [id, n] : nodes_) {
    if (n.liveness != Liveness::Alive || !n.supports(m)) continue;
    const double load = n.state.metrics.predicted_load();
    if (!best || load < best_load) {
      best = id;
      best_load = load;
    }
  }
  if (!best) {
    return make_error(ErrorKind::NodeUnreachable, std::string("no live node supports ") + to_string(m));
  }
  return *best;
}

void Cluster::send(NodeId dest, Qos qos, const Payload& payload) {
  MessageEnvelope env;
  env.msg_id = next_msg_id_++;
  env.qos = qos;
  env.source = kCoordinatorId;
  env.dest = dest;
  env.payload = encode_payload(payload);
  auto frame = encode_envelope(env);
  Node& n = nodes_.at(dest);
  (qos == Qos::Realtime ? n.realtime_inbox : n.bulk_inbox).push_back(std::move(frame));
}

bool Cluster::dispatch(std::uint64_t task_id, Modality m, const std::string& tag) {
  auto target = balance_load(m);
  if (!target) return false;
  send(*target, qos_for(m), TaskMsg{task_id, m, tag});
  pending_[task_id] = Assignment{*target, m, tag, tick_};
  log("dispatch", "task=" + std::to_string(task_id) + " modality=" + to_string(m) + " tag=" + tag +
                      " node=" + std::to_string(*target));
  return true;
}

void Cluster::submit_input(Modality m, std::string tag) {
  const std::uint64_t task_id = next_task_id_++;
  log("input", std::string("task=") + std::to_string(task_id) + " modality=" + to_string(m) + " tag=" + tag);
  if (!dispatch(task_id, m, tag)) {
    log("unroutable", "task=" + std::to_string(task_id) + " modality=" + to_string(m));
    backlog_.push_back(task_id);
    backlog_tasks_[task_id] = {m, std::move(tag)};
  }
}

void Cluster::schedule_input(std::uint64_t tick, Modality m, std::string tag) {
  scheduled_inputs_.emplace(tick, std::make_pair(m, std::move(tag)));
}

void Cluster::schedule_kill(std::uint64_t tick, NodeId id) { scheduled_kills_.emplace(tick, id); }

Cluster::NodeWork Cluster::run_node(Node& n, bool heartbeat, bool process) {
  NodeWork work;
  auto emit = [&](Qos qos, const Payload& payload) {
    MessageEnvelope env;
    // Node-originated ids live in their own space: high 32 bits carry the node id.
    env.msg_id = (static_cast<std::uint64_t>(n.id) << 32) | (n.heartbeat_seq + n.state.processed.size());
    env.qos = qos;
    env.source = n.id;
    env.dest = kCoordinatorId;
    env.payload = encode_payload(payload);
    work.outgoing.push_back(encode_envelope(env));
  };

  if (heartbeat) {
    ++n.heartbeat_seq;
    emit(Qos::Realtime, HeartbeatMsg{n.id, n.heartbeat_seq, tick_});
  }
  if (!process) return work;

  std::size_t handled = 0;
  while (handled < cfg_.node_capacity && n.backlog() > 0) {
    auto& box = n.realtime_inbox.empty() ? n.bulk_inbox : n.realtime_inbox;
    auto frame = std::move(box.front());
    box.pop_front();
    ++handled;
    auto env = decode_envelope(frame);
    if (!env) {
      work.events.push_back({tick_, "corrupt", "node=" + std::to_string(n.id) + " " + env.error().message()});
      continue;
    }
    auto payload = decode_payload(env->payload);
    const auto* task = payload ? std::get_if<TaskMsg>(&*payload) : nullptr;
    if (!task || !n.supports(task->modality)) {
      work.events.push_back({tick_, "rejected", "node=" + std::to_string(n.id) + " msg=" + std::to_string(env->msg_id)});
      continue;
    }
    auto out = modality_process(task->modality, task->tag);
    if (!out) {
      work.events.push_back({tick_, "rejected", "node=" + std::to_string(n.id) + " " + out.error().message()});
      continue;
    }
    n.state.processed.push_back(env->msg_id);
    n.state.last_outputs[task->modality] = out->label;
    emit(env->qos, ResultMsg{task->task_id, std::move(*out)});
  }

  const double noise_cpu = uniform_real(n.rng, 0.0, 0.1);
  const double noise_mem = uniform_real(n.rng, 0.0, 0.05);
  const double noise_io = uniform_real(n.rng, 0.0, 0.05);
  n.state.metrics.push(clamp01(0.15 * static_cast<double>(handled) + 0.05 * static_cast<double>(n.backlog()) + noise_cpu),
                       clamp01(0.02 * static_cast<double>(n.state.last_outputs.size()) + noise_mem),
                       clamp01(0.1 * static_cast<double>(handled) + noise_io));
  return work;
}

void Cluster::deliver_to_coordinator(std::vector<std::byte> frame) {
  coordinator_inbox_.push_back(std::move(frame));
}

void Cluster::drain_coordinator() {
  while (!coordinator_inbox_.empty()) {
    auto frame = std::move(coordinator_inbox_.front());
    coordinator_inbox_.pop_front();
    auto env = decode_envelope(frame);
    if (!env) {
      log("corrupt", "coordinator " + env.error().message());
      continue;
    }
    auto payload = decode_payload(env->payload);
    if (!payload) {
      log("corrupt", "coordinator " + payload.error().message());
      continue;
    }
    if (const auto* hb = std::get_if<HeartbeatMsg>(&*payload)) {
      auto it = nodes_.find(hb->node);
      if (it == nodes_.end() || it->second.liveness == Liveness::Failed) continue;
      auto& last_seq = last_heartbeat_seq_[hb->node];
      if (hb->sequence <= last_seq) {
        log("stale_heartbeat", "node=" + std::to_string(hb->node));
        continue;
      }
      last_seq = hb->sequence;
      last_heartbeat_tick_[hb->node] = hb->tick;
      if (it->second.liveness == Liveness::Suspect) {
        it->second.liveness = Liveness::Alive;
        log("alive", "node=" + std::to_string(hb->node));
      }
    } else if (auto* res = std::get_if<ResultMsg>(&*payload)) {
      auto it = pending_.find(res->task_id);
      if (it == pending_.end()) {
        log("duplicate", "task=" + std::to_string(res->task_id) + " node=" + std::to_string(env->source));
        continue;
      }
      log("result", "task=" + std::to_string(res->task_id) + " node=" + std::to_string(env->source) +
                        " label=" + res->output.label);
      pending_.erase(it);
      latest_[res->output.modality] = std::move(res->output);
    }
  }
}

void Cluster::heartbeat_tick() {
  for (auto& [id, n] : nodes_) {
    if (n.silenced || n.liveness == Liveness::Failed) continue;
    for (auto& frame : run_node(n, true, false).outgoing) deliver_to_coordinator(std::move(frame));
  }
  drain_coordinator();
}

std::vector<NodeId> Cluster::detect_failures(std::uint64_t timeout_ticks) {
  std::vector<NodeId> failed;
  if (timeout_ticks == 0) return failed;
  for (auto& [id, n] : nodes_) {
    if (n.liveness == Liveness::Failed) continue;
    const std::uint64_t missing = tick_ - last_heartbeat_tick_[id];
    if (missing > timeout_ticks && n.liveness == Liveness::Alive) {
      n.liveness = Liveness::Suspect;
      log("suspect", "node=" + std::to_string(id) + " silent_ticks=" + std::to_string(missing));
    }
    if (missing > 2 * timeout_ticks) {
      n.liveness = Liveness::Failed;
      log("failed", "node=" + std::to_string(id) + " silent_ticks=" + std::to_string(missing));
      failed.push_back(id);
    }
  }
  for (NodeId id : failed) failover(id);
  return failed;
}

void Cluster::failover(NodeId failed) {
  Node& n = nodes_.at(failed);
  n.realtime_inbox.clear();
  n.bulk_inbox.clear();
  std::vector<std::uint64_t> orphaned;
  for (const auto& [task_id, a] : pending_) {
    if (a.node == failed) orphaned.push_back(task_id);
  }
  for (std::uint64_t task_id : orphaned) {
    Assignment a = pending_.at(task_id);
    pending_.erase(task_id);
    if (dispatch(task_id, a.modality, a.tag)) {
      log("failover", "task=" + std::to_string(task_id) + " from=" + std::to_string(failed) +
                          " to=" + std::to_string(pending_.at(task_id).node));
    } else {
      log("unroutable", "task=" + std::to_string(task_id) + " modality=" + to_string(a.modality));
      backlog_.push_back(task_id);
      backlog_tasks_[task_id] = {a.modality, a.tag};
    }
  }
}

Result<Checkpoint> Cluster::checkpoint_node(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) return make_error(ErrorKind::InvalidArgument, "unknown node " + std::to_string(id));
  Node* peer = nullptr;
  for (auto& [pid, p] : nodes_) {
    if (pid != id && p.liveness == Liveness::Alive) {
      peer = &p;
      break;
    }
  }
  if (!peer) {
    return make_error(ErrorKind::NodeUnreachable, "no live peer to replicate node " + std::to_string(id));
  }
  Checkpoint chk{id, ++checkpoint_seq_[id], serialize_state(it->second.state)};
  peer->replicas[id] = chk;
  log("checkpoint", "node=" + std::to_string(id) + " seq=" + std::to_string(chk.sequence) +
                        " replica=" + std::to_string(peer->id));
  return chk;
}

std::optional<Checkpoint> Cluster::latest_checkpoint(NodeId id) const {
  std::optional<Checkpoint> best;
  for (const auto& [pid, p] : nodes_) {
    if (p.liveness == Liveness::Failed) continue;
    auto it = p.replicas.find(id);
    if (it != p.replicas.end() && (!best || it->second.sequence > best->sequence)) best = it->second;
  }
  return best;
}

Status Cluster::restore_node(const Checkpoint& chk, std::optional<NodeId> target) {
  bool known = false;
  for (const auto& [pid, p] : nodes_) {
    auto it = p.replicas.find(chk.node);
    if (p.liveness != Liveness::Failed && it != p.replicas.end() && it->second == chk) known = true;
  }
  if (!known) {
    return make_error(ErrorKind::InvalidArgument, "no replica holds checkpoint " + std::to_string(chk.node) +
                                                      "#" + std::to_string(chk.sequence));
  }
  auto state = deserialize_state(chk.snapshot);
  if (!state) return state.error();
  const NodeId dest = target.value_or(chk.node);
  if (dest == kCoordinatorId) return make_error(ErrorKind::InvalidArgument, "cannot restore onto coordinator");

  auto it = nodes_.find(dest);
  if (it == nodes_.end()) {
    Node n;
    n.id = dest;
    n.rng.seed(cfg_.seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(dest) + 1)));
    it = nodes_.emplace(dest, std::move(n)).first;
  }
  Node& n = it->second;
  n.state = std::move(*state);
  n.liveness = Liveness::Alive;
  n.silenced = false;
  last_heartbeat_tick_[dest] = tick_;
  log("restore", "checkpoint=" + std::to_string(chk.node) + "#" + std::to_string(chk.sequence) +
                     " node=" + std::to_string(dest));
  return ok_status();
}

Status Cluster::restore_latest(NodeId node, NodeId target) {
  auto chk = latest_checkpoint(node);
  if (!chk) {
    log("restore_failed", "node=" + std::to_string(node) + " no replica");
    return make_error(ErrorKind::NodeUnreachable, "no replica of node " + std::to_string(node));
  }
  return restore_node(*chk, target);
}

void Cluster::step() {
  advance_clock();

  // Parked work first, so it keeps its place ahead of new arrivals.
  for (std::size_t i = backlog_.size(); i > 0; --i) {
    const std::uint64_t task_id = backlog_.front();
    backlog_.pop_front();
    auto [m, tag] = backlog_tasks_.at(task_id);
    if (dispatch(task_id, m, tag)) {
      backlog_tasks_.erase(task_id);
    } else {
      backlog_.push_back(task_id);
    }
  }
  auto [in_begin, in_end] = scheduled_inputs_.equal_range(tick_);
  for (auto it = in_begin; it != in_end; ++it) submit_input(it->second.first, it->second.second);

  std::vector<Node*> active;
  for (auto& [id, n] : nodes_) {
    if (!n.silenced && n.liveness != Liveness::Failed) active.push_back(&n);
  }
  std::vector<NodeWork> results(active.size());
  if (cfg_.threaded && active.size() > 1) {
    std::vector<std::jthread> workers;
    workers.reserve(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
      workers.emplace_back([&, i] { results[i] = run_node(*active[i], true, true); });
    }
  } else {
    for (std::size_t i = 0; i < active.size(); ++i) results[i] = run_node(*active[i], true, true);
  }
  // Merge in node-id order so threaded and sequential runs agree.
  for (auto& w : results) {
    for (auto& e : w.events) events_.push_back(std::move(e));
    for (auto& frame : w.outgoing) deliver_to_coordinator(std::move(frame));
  }

  auto [k_begin, k_end] = scheduled_kills_.equal_range(tick_);
  for (auto it = k_begin; it != k_end; ++it) (void)silence(it->second);

  drain_coordinator();
  detect_failures(cfg_.heartbeat_timeout);

  if (cfg_.checkpoint_interval > 0 && tick_ % cfg_.checkpoint_interval == 0) {
    for (auto& [id, n] : nodes_) {
      if (n.liveness != Liveness::Alive) continue;
      auto chk = checkpoint_node(id);
      if (!chk) log("checkpoint_failed", "node=" + std::to_string(id) + " " + chk.error().message());
    }
  }
}

// Fusion --------------------------------------------------------------------

Result<FusedRepresentation> fuse(const std::vector<ModalityOutput>& outputs) {
  if (outputs.empty()) return make_error(ErrorKind::InvalidArgument, "nothing to fuse");
  std::map<Modality, const ModalityOutput*> by_modality;
  for (const auto& o : outputs) by_modality[o.modality] = &o;

  FusedRepresentation fused;
  for (Modality m : {Modality::Vision, Modality::Sensor, Modality::Audio, Modality::Language}) {
    if (auto it = by_modality.find(m); it != by_modality.end()) fused.outputs.push_back(*it->second);
  }

  auto label_of = [&](Modality m) -> const std::string* {
    auto it = by_modality.find(m);
    return it == by_modality.end() ? nullptr : &it->second->label;
  };

  std::string summary;
  if (const auto* v = label_of(Modality::Vision)) {
    const bool vowel = !v->empty() && std::string_view("aeiouAEIOU").find((*v)[0]) != std::string_view::npos;
    summary = (vowel ? "An " : "A ") + *v;
  } else {
    summary = "Something";
  }

  std::vector<std::string> clauses;
  bool placed = false;
  if (const auto* s = label_of(Modality::Sensor)) {
    constexpr std::string_view kDistance = "distance=";
    if (s->rfind(kDistance, 0) == 0 && s->size() > kDistance.size() + 1 && s->back() == 'm') {
      const std::string amount = s->substr(kDistance.size(), s->size() - kDistance.size() - 1);
      summary += " is standing " + amount + (amount == "1" ? " meter away" : " meters away");
      placed = true;
    } else {
      clauses.push_back(*s);
    }
  }
  if (!placed) summary += " is present";
  if (const auto* a = label_of(Modality::Audio)) clauses.push_back(*a);
  if (const auto* l = label_of(Modality::Language)) clauses.push_back(*l);
  for (const auto& c : clauses) summary += ", " + c;

  fused.summary = std::move(summary);
  return fused;
}

std::string decide(const FusedRepresentation& fused) {
  bool person = false, help = false;
  for (const auto& o : fused.outputs) {
    if (o.modality == Modality::Vision && o.label == "person") person = true;
    if ((o.modality == Modality::Audio || o.modality == Modality::Language) &&
        (o.label.find("help") != std::string::npos || o.label.find("assistance") != std::string::npos)) {
      help = true;
    }
  }
  struct Rule {
    bool needs_person;
    bool needs_help;
    const char* action;
  };
  static constexpr Rule kRules[] = {
      {true, true, "Approach the person and respond verbally"},
      {false, true, "Locate the source of the request"},
      {true, false, "Acknowledge the person"},
      {false, false, "Continue monitoring"},
  };
  for (const Rule& r : kRules) {
    if ((!r.needs_person || person) && (!r.needs_help || help)) return r.action;
  }
  return "Continue monitoring";
}

// Scenarios -----------------------------------------------------------------

Result<Scenario> parse_scenario(std::string_view text) {
  Scenario sc;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::vector<std::string> f;
    for (std::string tok; fields >> tok;) f.push_back(tok);
    auto bad = [&](const std::string& why) {
      return make_error(ErrorKind::InvalidArgument, "scenario line " + std::to_string(line_no) + ": " + why);
    };
    if (f[0] == "node") {
      ScenarioNode n{};
      if (f.size() != 3 || !parse_uint(f[1], n.id)) return bad("expected: node <id> <modalities>");
      std::stringstream list(f[2]);
      for (std::string m; std::getline(list, m, ',');) {
        auto mod = parse_modality(m);
        if (!mod) return bad(mod.error().detail);
        n.modalities.insert(*mod);
      }
      sc.nodes.push_back(std::move(n));
    } else if (f[0] == "input") {
      std::uint64_t tick = 0;
      if (f.size() != 4 || !parse_uint(f[1], tick)) return bad("expected: input <tick> <modality> <tag>");
      auto mod = parse_modality(f[2]);
      if (!mod) return bad(mod.error().detail);
      sc.inputs.emplace_back(tick, *mod, f[3]);
    } else if (f[0] == "kill") {
      std::uint64_t tick = 0;
      NodeId id = 0;
      if (f.size() != 3 || !parse_uint(f[1], tick) || !parse_uint(f[2], id)) return bad("expected: kill <tick> <node>");
      sc.kills.emplace_back(tick, id);
    } else if (f[0] == "restore") {
      ScenarioRestore r{};
      if ((f.size() != 4 && f.size() != 3) || !parse_uint(f[1], r.tick) || !parse_uint(f[2], r.node)) {
        return bad("expected: restore <tick> <node> [<as-node>]");
      }
      r.target = r.node;
      if (f.size() == 4 && !parse_uint(f[3], r.target)) return bad("bad restore target");
      sc.restores.push_back(r);
    } else {
      return bad("unknown directive '" + f[0] + "'");
    }
  }
  return sc;
}

Result<ScenarioReport> run_scenario(const Scenario& scenario, std::uint64_t ticks, ClusterConfig cfg) {
  Cluster cluster(cfg);
  for (const auto& n : scenario.nodes) NK_RETURN_IF_ERROR(cluster.add_node(n.id, n.modalities));
  for (const auto& [tick, m, tag] : scenario.inputs) cluster.schedule_input(tick, m, tag);
  for (const auto& [tick, id] : scenario.kills) {
    if (!cluster.node(id)) return make_error(ErrorKind::InvalidArgument, "kill of unknown node " + std::to_string(id));
    cluster.schedule_kill(tick, id);
  }
  std::multimap<std::uint64_t, ScenarioRestore> restores;
  for (const auto& r : scenario.restores) restores.emplace(r.tick, r);

  for (std::uint64_t t = 0; t < ticks; ++t) {
    cluster.step();
    auto [b, e] = restores.equal_range(cluster.now());
    for (auto it = b; it != e; ++it) (void)cluster.restore_latest(it->second.node, it->second.target);
  }

  ScenarioReport report;
  report.events = cluster.events();
  std::vector<ModalityOutput> outs;
  for (const auto& [m, o] : cluster.latest_outputs()) outs.push_back(o);
  if (auto fused = fuse(outs)) {
    report.fused = fused->summary;
    report.decision = decide(*fused);
  } else {
    report.fused = "none";
    report.decision = "Continue monitoring";
  }
  return report;
}

std::string report_csv(const ScenarioReport& report, std::uint64_t final_tick) {
  std::ostringstream out;
  out << "tick,event,detail\n";
  for (const auto& e : report.events) {
    out << e.tick << ',' << csv_field(e.event) << ',' << csv_field(e.detail) << '\n';
  }
  out << final_tick << ",fused," << csv_field(report.fused) << '\n';
  out << final_tick << ",decision," << csv_field(report.decision) << '\n';
  return out.str();
}

}  // namespace neurokernel::orch
