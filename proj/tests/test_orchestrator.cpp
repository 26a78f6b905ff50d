#include <gtest/gtest.h>

#include <cmath>

#include "neurokernel/orchestrator.hpp"
#include "neurokernel/random.hpp"
#include "neurokernel/selftest.hpp"

namespace nk = neurokernel;
using namespace nk::orch;

namespace {

std::vector<std::byte> bytes_of(std::string_view s) {
  std::vector<std::byte> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = static_cast<std::byte>(s[i]);
  return out;
}

ClusterConfig quiet(std::uint64_t timeout = 3) {
  ClusterConfig cfg;
  cfg.heartbeat_timeout = timeout;
  cfg.checkpoint_interval = 0;
  return cfg;
}

TEST(Modality, Labels) {
  auto v = modality_process(Modality::Vision, "person");
  ASSERT_TRUE(v);
  EXPECT_EQ(v->label, "person");
  double norm = 0;
  for (double x : v->tensor.data()) norm += x * x;
  EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-12);
  EXPECT_EQ(modality_process(Modality::Sensor, "3m")->label, "distance=3m");
  EXPECT_EQ(modality_process(Modality::Audio, "help")->label, "asking for help");
  EXPECT_EQ(modality_process(std::uint8_t{9}, "x").error().kind, nk::ErrorKind::InvalidArgument);
}

TEST(Envelope, KnownLayout) {
  MessageEnvelope env;
  env.msg_id = 0x0102030405060708ULL;
  env.qos = Qos::Realtime;
  env.source = 7;
  env.dest = 9;
  env.payload = bytes_of("abc");
  const auto frame = encode_envelope(env);
  ASSERT_EQ(frame.size(), kEnvelopeOverhead + 3);
  EXPECT_EQ(frame[0], std::byte{'N'});
  EXPECT_EQ(frame[3], std::byte{'1'});
  EXPECT_EQ(frame[4], std::byte{1});  // version, little-endian
  EXPECT_EQ(frame[6], std::byte{0});  // qos Realtime
  EXPECT_EQ(frame[7], std::byte{0x08});
  EXPECT_EQ(frame[15], std::byte{7});
  EXPECT_EQ(frame[23], std::byte{3});
  // CRC-32 of "abc" is 0x352441c2.
  EXPECT_EQ(env.checksum(), 0x352441c2u);
  EXPECT_EQ(frame[30], std::byte{0xc2});
  EXPECT_EQ(frame[33], std::byte{0x35});
}

TEST(Envelope, RejectsBadFrames) {
  MessageEnvelope env;
  env.payload = bytes_of("payload");
  auto frame = encode_envelope(env);

  auto v2 = frame;
  v2[4] = std::byte{2};
  EXPECT_EQ(decode_envelope(v2).error().kind, nk::ErrorKind::InvalidArgument);

  auto magic = frame;
  magic[0] = std::byte{'X'};
  EXPECT_EQ(decode_envelope(magic).error().kind, nk::ErrorKind::InvalidArgument);

  auto flipped = frame;
  flipped[kEnvelopeOverhead - 4] ^= std::byte{1};
  EXPECT_EQ(decode_envelope(flipped).error().kind, nk::ErrorKind::ChecksumMismatch);

  auto truncated = frame;
  truncated.pop_back();
  EXPECT_EQ(decode_envelope(truncated).error().kind, nk::ErrorKind::InvalidArgument);

  auto older = frame;
  older[4] = std::byte{0};
  EXPECT_TRUE(decode_envelope(older));
}

TEST(Envelope, RandomRoundTripsAndCrcAgreement) {
  nk::Rng rng(21);
  for (int i = 0; i < 2000; ++i) {
    MessageEnvelope env;
    env.msg_id = rng();
    env.source = static_cast<NodeId>(rng());
    env.dest = static_cast<NodeId>(rng());
    env.qos = nk::coin(rng) ? Qos::Bulk : Qos::Realtime;
    env.payload.resize(nk::uniform_index(rng, 300));
    for (auto& b : env.payload) b = static_cast<std::byte>(rng());
    auto back = decode_envelope(encode_envelope(env));
    ASSERT_TRUE(back);
    ASSERT_EQ(*back, env);
    ASSERT_EQ(env.checksum(), nk::selftest::crc32_bitwise(reinterpret_cast<const unsigned char*>(env.payload.data()),
                                                          env.payload.size()));
  }
}

TEST(Payload, RoundTrips) {
  const Payload hb = HeartbeatMsg{3, 17, 40};
  auto back = decode_payload(encode_payload(hb));
  ASSERT_TRUE(back);
  EXPECT_EQ(std::get<HeartbeatMsg>(*back), std::get<HeartbeatMsg>(hb));

  const Payload task = TaskMsg{5, Modality::Language, "hello"};
  EXPECT_EQ(std::get<TaskMsg>(*decode_payload(encode_payload(task))), std::get<TaskMsg>(task));

  auto out = *modality_process(Modality::Vision, "person");
  auto res = decode_payload(encode_payload(ResultMsg{8, out}));
  ASSERT_TRUE(res);
  const auto& r = std::get<ResultMsg>(*res);
  EXPECT_EQ(r.task_id, 8u);
  EXPECT_EQ(r.output.label, "person");
  EXPECT_EQ(r.output.tensor, out.tensor);
  EXPECT_FALSE(decode_payload(bytes_of("\x09")));
}

TEST(Heartbeat, SilencedNodeFailsAfterTwiceTimeoutPlusOne) {
  for (std::uint64_t timeout : {1, 2, 3, 4}) {
    Cluster c(quiet(timeout));
    ASSERT_TRUE(c.add_node(1, {Modality::Vision}));
    ASSERT_TRUE(c.add_node(2, {Modality::Vision}));
    c.step();
    c.step();
    ASSERT_TRUE(c.silence(1));  // last heartbeat at tick 2
    std::uint64_t failed_at = 0;
    for (int i = 0; i < 20 && failed_at == 0; ++i) {
      c.step();
      if (c.node(1)->liveness == Liveness::Failed) failed_at = c.now();
    }
    EXPECT_EQ(failed_at, 2 + 2 * timeout + 1) << timeout;
  }
}

TEST(Heartbeat, ShortSilenceStaysAlive) {
  Cluster c(quiet(3));
  ASSERT_TRUE(c.add_node(1, {Modality::Vision}));
  for (int i = 0; i < 2; ++i) c.advance_clock();  // timeout - 1 silent ticks
  EXPECT_TRUE(c.detect_failures(3).empty());
  EXPECT_EQ(c.node(1)->liveness, Liveness::Alive);
  c.heartbeat_tick();
  for (int i = 0; i < 4; ++i) c.advance_clock();
  detect_failures(c, 3);
  EXPECT_EQ(c.node(1)->liveness, Liveness::Suspect);
  heartbeat_tick(c);
  EXPECT_EQ(c.node(1)->liveness, Liveness::Alive);
}

TEST(Heartbeat, FailedNodeWorkIsRerouted) {
  Cluster c(quiet(1));
  ASSERT_TRUE(c.add_node(1, {Modality::Vision}));
  ASSERT_TRUE(c.add_node(2, {Modality::Vision}));
  ASSERT_TRUE(c.silence(1));
  c.submit_input(Modality::Vision, "person");  // equal loads: lowest id wins
  ASSERT_EQ(c.pending().begin()->second.node, 1u);
  for (int i = 0; i < 6; ++i) c.step();
  EXPECT_EQ(c.node(1)->liveness, Liveness::Failed);
  EXPECT_TRUE(c.pending().empty());
  EXPECT_EQ(c.latest_outputs().at(Modality::Vision).label, "person");
  bool rerouted = false;
  for (const auto& e : c.events()) rerouted = rerouted || (e.event == "failover" && e.detail.find("to=2") != std::string::npos);
  EXPECT_TRUE(rerouted);
}

TEST(Checkpoint, RoundTripAndReplication) {
  Cluster c(quiet());
  ASSERT_TRUE(c.add_node(1, {Modality::Vision}));
  EXPECT_EQ(c.checkpoint_node(1).error().kind, nk::ErrorKind::NodeUnreachable);
  ASSERT_TRUE(c.add_node(2, {Modality::Audio}));
  EXPECT_EQ(c.checkpoint_node(9).error().kind, nk::ErrorKind::InvalidArgument);
  c.submit_input(Modality::Vision, "cat");
  c.step();
  auto chk = c.checkpoint_node(1);
  ASSERT_TRUE(chk);
  EXPECT_EQ(c.node(2)->replicas.at(1), *chk);
  c.submit_input(Modality::Vision, "dog");
  c.step();
  ASSERT_NE(serialize_state(c.node(1)->state), chk->snapshot);
  ASSERT_TRUE(c.restore_node(*chk));
  EXPECT_EQ(serialize_state(c.node(1)->state), chk->snapshot);
  EXPECT_EQ(*deserialize_state(chk->snapshot), c.node(1)->state);

  Checkpoint bogus{1, 99, chk->snapshot};
  EXPECT_EQ(c.restore_node(bogus).error().kind, nk::ErrorKind::InvalidArgument);
}

TEST(Checkpoint, ReplacementNodeServesOldModalities) {
  Cluster c(quiet(1));
  ASSERT_TRUE(c.add_node(1, {Modality::Sensor}));
  ASSERT_TRUE(c.add_node(2, {Modality::Audio}));
  auto chk = *c.checkpoint_node(1);
  ASSERT_TRUE(c.silence(1));
  for (int i = 0; i < 4; ++i) c.step();
  ASSERT_EQ(c.node(1)->liveness, Liveness::Failed);
  EXPECT_EQ(c.balance_load(Modality::Sensor).error().kind, nk::ErrorKind::NodeUnreachable);
  ASSERT_TRUE(c.restore_node(chk, NodeId{7}));
  EXPECT_EQ(*c.balance_load(Modality::Sensor), 7u);
  c.submit_input(Modality::Sensor, "3m");
  c.step();
  EXPECT_EQ(c.latest_outputs().at(Modality::Sensor).label, "distance=3m");
}

TEST(Balancer, PicksLowestPredictedLoad) {
  Cluster c(quiet());
  ASSERT_TRUE(c.add_node(1, {Modality::Vision}));
  ASSERT_TRUE(c.add_node(2, {Modality::Vision}));
  EXPECT_EQ(*balance_load(c, Modality::Vision), 1u);  // tie: lowest id
  ASSERT_TRUE(c.report_metrics(1, 0.9, 0.9, 0.9));
  ASSERT_TRUE(c.report_metrics(2, 0.1, 0.1, 0.1));
  EXPECT_EQ(*c.balance_load(Modality::Vision), 2u);
  EXPECT_FALSE(c.report_metrics(1, 1.5, 0, 0));
  EXPECT_EQ(c.balance_load(Modality::Audio).error().kind, nk::ErrorKind::NodeUnreachable);
}

TEST(Balancer, MovingAverageWeights) {
  MetricHistory h;
  EXPECT_EQ(h.predicted_load(), 0.0);
  h.push(1.0, 0.0, 0.0);
  h.push(0.0, 1.0, 0.0);
  h.push(0.0, 0.0, 1.0);
  h.push(0.4, 0.4, 0.4);  // evicts the first sample
  const double cpu = (0.0 + 0.0 + 0.4) / 3, mem = (1.0 + 0.0 + 0.4) / 3, io = (0.0 + 1.0 + 0.4) / 3;
  EXPECT_DOUBLE_EQ(h.predicted_load(), 0.5 * cpu + 0.3 * mem + 0.2 * io);
}

TEST(Fusion, TemplateAndDecisions) {
  auto v = *modality_process(Modality::Vision, "person");
  auto s = *modality_process(Modality::Sensor, "3m");
  auto a = *modality_process(Modality::Audio, "help");
  auto fused = fuse({a, v, s});
  ASSERT_TRUE(fused);
  EXPECT_EQ(fused->summary, "A person is standing 3 meters away, asking for help");
  EXPECT_EQ(decide(*fused), "Approach the person and respond verbally");
  EXPECT_EQ(fused->outputs[0].modality, Modality::Vision);
  EXPECT_EQ(fused->outputs[1].modality, Modality::Sensor);

  auto alone = fuse({v});
  EXPECT_EQ(alone->summary, "A person is present");
  EXPECT_EQ(decide(*alone), "Acknowledge the person");
  EXPECT_EQ(fuse({}).error().kind, nk::ErrorKind::InvalidArgument);
}

TEST(Scenario, ParseErrors) {
  EXPECT_FALSE(parse_scenario("node x vision\n"));
  EXPECT_FALSE(parse_scenario("node 1 smell\n"));
  EXPECT_FALSE(parse_scenario("teleport 1 2\n"));
  auto ok = parse_scenario("# c\nnode 1 vision,audio\ninput 2 audio help # trailing\nkill 3 1\nrestore 9 1 4\n");
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->nodes[0].modalities.size(), 2u);
  EXPECT_EQ(ok->restores[0].target, 4u);
}

TEST(Scenario, DemoIsDeterministicAcrossModes) {
  auto sc = *parse_scenario(nk::selftest::kDemoScenario);
  ClusterConfig seq;
  ClusterConfig par;
  par.threaded = true;
  auto a = run_scenario(sc, 15, seq);
  auto b = run_scenario(sc, 15, par);
  auto c = run_scenario(sc, 15, seq);
  ASSERT_TRUE(a && b && c);
  EXPECT_EQ(a->fused, nk::selftest::kDemoSummary);
  EXPECT_EQ(a->decision, nk::selftest::kDemoDecision);
  EXPECT_EQ(a->events, b->events);
  EXPECT_EQ(report_csv(*a, 15), report_csv(*c, 15));
  EXPECT_NE(report_csv(*a, 15).find("\"A person is standing 3 meters away, asking for help\""), std::string::npos);
}

TEST(Scenario, RestoreDirectiveRecoversNode) {
  auto sc = *parse_scenario(
      "node 1 sensor\nnode 2 vision\ninput 1 sensor 3m\nkill 6 1\nrestore 20 1 5\ninput 21 sensor 4m\n");
  ClusterConfig cfg;
  cfg.heartbeat_timeout = 2;
  auto report = run_scenario(sc, 25, cfg);
  ASSERT_TRUE(report);
  bool restored = false, routed_to_5 = false;
  for (const auto& e : report->events) {
    restored = restored || e.event == "restore";
    routed_to_5 = routed_to_5 || (e.event == "dispatch" && e.detail.find("node=5") != std::string::npos);
  }
  EXPECT_TRUE(restored);
  EXPECT_TRUE(routed_to_5);
}

}  // namespace
