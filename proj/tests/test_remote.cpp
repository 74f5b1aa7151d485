#include <gtest/gtest.h>

#include <thread>

#include "common.hpp"
#include "fedkit/hub/tcp_transport.hpp"
#include "fedkit/plant/factory.hpp"
#include "fedkit/sync/runner.hpp"

using namespace fedkit;
using namespace fedkit::hub;
using testing_paths::registry;

namespace {

SimTime ms(std::int64_t v) { return SimTime{v * 1'000'000}; }

/// Serves `d` from a fresh local participant on the far end of a channel.
struct Peer {
  std::shared_ptr<plant::Participant> part;
  std::thread thread;
  std::size_t served{0};

  Peer(experiment::ParticipantDescriptor d, std::shared_ptr<Transport> t, std::uint64_t seed) {
    d.external = false;
    part = plant::make_participant(d, seed);
    thread = std::thread([this, t] { served = serve_participant(*t, *part, "peer"); });
  }
  ~Peer() {
    if (thread.joinable()) thread.join();
  }
};

/// Plays the remote side by hand: answers one grant with `replies`.
void answer(Transport& t, std::vector<Envelope> replies) {
  std::optional<Envelope> g;
  while (!g) g = t.receive(std::chrono::milliseconds{100});
  for (auto& r : replies) t.send(r);
}

Envelope env(MessageType type, std::uint64_t seq, std::int64_t t, Json payload = Json::object()) {
  Envelope e;
  e.type = type;
  e.seq = seq;
  e.sim_time_ns = t;
  e.payload = std::move(payload);
  return e;
}

}  // namespace

TEST(Envelope, LineRoundTrip) {
  auto e = env(MessageType::grant, 4, 10, {{"from_ns", 0}});
  e.session = "s-1";
  const auto back = Envelope::parse(e.line());
  EXPECT_EQ(back.to_json(), e.to_json());
  EXPECT_FEDKIT_ERROR(Envelope::parse("{\"v\":1"), ProtocolError);
  EXPECT_FEDKIT_ERROR(Envelope::parse(R"({"v":2,"type":"grant","session":"","seq":1,"sim_time_ns":0,"payload":{}})"),
                      ProtocolError);
}

TEST(RemoteParticipant, MatchesLocalOverMemoryPipe) {
  const auto exp = testing_paths::demo();
  const auto& d = *exp.participant("ctrl");
  auto [near, far] = memory_pipe();
  Peer peer(d, far, exp.seed);
  RemoteParticipant remote(d, near, "s-1");
  auto local = plant::make_participant(d, exp.seed);
  for (int k = 0; k < 50; ++k) {
    plant::HeldInputs in({{"siteB.ctrl.v_meas", 360.0 + k}, {"siteB.ctrl.v_set", 380.0}});
    remote.advance(ms(10 * k), ms(10 * (k + 1)), in);
    local->advance(ms(10 * k), ms(10 * (k + 1)), in);
    ASSERT_EQ(remote.outputs().size(), 1u);
    EXPECT_EQ(remote.outputs()[0].value, local->outputs()[0].value) << k;
  }
  near->close();
  peer.thread.join();
  EXPECT_EQ(peer.served, 51u);
}

TEST(RemoteParticipant, ExternalRunEqualsLocalRun) {
  auto exp = testing_paths::demo();
  const auto ref = sync::run_local(registry(), exp).trace_csv();
  exp.participants[1].external = true;
  std::vector<std::unique_ptr<Peer>> peers;
  std::vector<std::shared_ptr<Transport>> channels;
  const auto r = sync::run_local(registry(), exp, {}, [&](const experiment::ParticipantDescriptor& d) {
    auto [near, far] = memory_pipe();
    peers.push_back(std::make_unique<Peer>(d, far, exp.seed));
    channels.push_back(near);
    return std::make_shared<RemoteParticipant>(d, near, "s-x");
  });
  for (auto& c : channels) c->close();
  EXPECT_EQ(r.trace_csv(), ref);
  ASSERT_EQ(peers.size(), 1u);
}

TEST(RemoteParticipant, RejectsUnofferedPublish) {
  const auto d = *testing_paths::demo().participant("ctrl");
  auto [near, far] = memory_pipe();
  std::thread t([far = far] {
    answer(*far, {env(MessageType::publish, 1, 0, sample_to_json({"siteA.grid.v_load", SimTime{0}, 1.0, "V", Quality::good, "ctrl", 0}))});
  });
  EXPECT_FEDKIT_ERROR(RemoteParticipant(d, near, "s", std::chrono::seconds{5}), NotOffered);
  t.join();
}

TEST(RemoteParticipant, ProtocolViolations) {
  const auto d = *testing_paths::demo().participant("ctrl");
  {
    auto [near, far] = memory_pipe();
    std::thread t([far = far] { answer(*far, {env(MessageType::request_step, 1, 99)}); });
    EXPECT_FEDKIT_ERROR(RemoteParticipant(d, near, "s", std::chrono::seconds{5}), ProtocolError);
    t.join();
  }
  {
    auto [near, far] = memory_pipe();
    std::thread t([far = far] {
      answer(*far, {env(MessageType::join, 3, 0), env(MessageType::request_step, 2, 0)});
    });
    EXPECT_FEDKIT_ERROR(RemoteParticipant(d, near, "s", std::chrono::seconds{5}), ProtocolError);
    t.join();
  }
  {
    auto [near, far] = memory_pipe();
    std::thread t([far = far] { answer(*far, {env(MessageType::error, 1, 0, {{"message", "boom"}})}); });
    EXPECT_FEDKIT_ERROR(RemoteParticipant(d, near, "s", std::chrono::seconds{5}), ParticipantFault);
    t.join();
  }
}

TEST(RemoteParticipant, SilentPeerTimesOut) {
  const auto d = *testing_paths::demo().participant("ctrl");
  auto [near, far] = memory_pipe();
  EXPECT_FEDKIT_ERROR(RemoteParticipant(d, near, "s", std::chrono::milliseconds{50}), ParticipantTimeout);
}

TEST(RemoteParticipant, ClosedPeerIsProtocolError) {
  const auto d = *testing_paths::demo().participant("ctrl");
  auto [near, far] = memory_pipe();
  far->close();
  EXPECT_FEDKIT_ERROR(RemoteParticipant(d, near, "s", std::chrono::seconds{5}), ProtocolError);
}

TEST(TcpTransport, StepsAParticipantOverLoopback) {
  using tcp = boost::asio::ip::tcp;
  boost::asio::io_context io;
  tcp::acceptor acc(io, {boost::asio::ip::make_address("127.0.0.1"), 0});
  const auto port = acc.local_endpoint().port();

  const auto exp = testing_paths::demo();
  const auto& d = *exp.participant("ctrl");
  std::shared_ptr<TcpTransport> client;
  std::thread connector([&] { client = TcpTransport::connect("127.0.0.1", port); });
  auto server = std::make_shared<TcpTransport>(acc.accept());
  connector.join();

  Peer peer(d, client, exp.seed);
  RemoteParticipant remote(d, server, "s-1");
  auto local = plant::make_participant(d, exp.seed);
  for (int k = 0; k < 20; ++k) {
    plant::HeldInputs in({{"siteB.ctrl.v_meas", 350.0}, {"siteB.ctrl.v_set", 380.0}});
    remote.advance(ms(10 * k), ms(10 * (k + 1)), in);
    local->advance(ms(10 * k), ms(10 * (k + 1)), in);
    EXPECT_EQ(remote.outputs()[0].value, local->outputs()[0].value) << k;
  }
  server->close();
  peer.thread.join();
  EXPECT_EQ(peer.served, 21u);
}

TEST(TcpTransport, MalformedLineClosesChannel) {
  using tcp = boost::asio::ip::tcp;
  boost::asio::io_context io;
  tcp::acceptor acc(io, {boost::asio::ip::make_address("127.0.0.1"), 0});
  tcp::socket raw(io);
  raw.connect(acc.local_endpoint());
  TcpTransport t(acc.accept());
  boost::asio::write(raw, boost::asio::buffer(std::string("not json\n")));
  try {
    for (int i = 0; i < 50; ++i) t.receive(std::chrono::milliseconds{100});
    FAIL() << "channel stayed open";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProtocolError);
  }
}

TEST(TcpTransport, ConnectFailureIsProtocolError) {
  using tcp = boost::asio::ip::tcp;
  boost::asio::io_context io;
  unsigned short port;
  {
    tcp::acceptor acc(io, {boost::asio::ip::make_address("127.0.0.1"), 0});
    port = acc.local_endpoint().port();
  }
  EXPECT_FEDKIT_ERROR(TcpTransport::connect("127.0.0.1", port), ProtocolError);
}
