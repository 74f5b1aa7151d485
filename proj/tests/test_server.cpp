#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "common.hpp"
#include "fedkit/hub/server.hpp"
#include "fedkit/plant/factory.hpp"
#include "fedkit/sync/runner.hpp"

using namespace fedkit;
using namespace fedkit::hub;
using testing_paths::registry;
namespace fs = std::filesystem;
namespace beast = boost::beast;
namespace http = beast::http;
using tcp = boost::asio::ip::tcp;

namespace {

struct Reply {
  unsigned status{0};
  std::string content_type;
  std::string body;
  Json json() const { return Json::parse(body); }
};

Reply request(unsigned short port, http::verb method, const std::string& target, const std::string& token = "",
              const std::string& body = "") {
  boost::asio::io_context io;
  tcp::socket s(io);
  s.connect({boost::asio::ip::make_address("127.0.0.1"), port});
  http::request<http::string_body> req{method, target, 11};
  req.set(http::field::host, "127.0.0.1");
  if (!token.empty()) req.set(http::field::authorization, "Bearer " + token);
  if (!body.empty()) {
    req.set(http::field::content_type, "application/json");
    req.body() = body;
  }
  req.prepare_payload();
  http::write(s, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(s, buf, res);
  return {res.result_int(), std::string(res[http::field::content_type]), res.body()};
}

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("fedkit_server_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    console_ = temp_dir("console");
    std::ofstream(console_ / "index.html") << "<html>console</html>";
    std::ofstream(console_ / "app.js") << "console.log(1)";
    ServerOptions opt;
    opt.http_port = 0;
    opt.console_dir = console_;
    opt.batch = std::chrono::milliseconds{20};
    opt.remote_timeout = std::chrono::seconds{10};
    server_ = std::make_unique<HubServer>(hub_, opt);
    server_->start();
    port_ = server_->http_port();
  }
  void TearDown() override {
    server_->stop();
    fs::remove_all(console_);
  }

  std::string start_demo(const experiment::ExperimentDescription& exp) {
    const auto r = request(port_, http::verb::post, "/api/v1/runs", "alpha-token", to_json(exp).dump());
    EXPECT_EQ(r.status, 201u) << r.body;
    return r.json().at("data").at("run").get<std::string>();
  }

  Hub hub_{registry()};
  fs::path console_;
  std::unique_ptr<HubServer> server_;
  unsigned short port_{0};
};

}  // namespace

TEST_F(ServerTest, StreamPortFollowsHttpPortByDefault) {
  ServerOptions opt;
  opt.http_port = static_cast<unsigned short>(port_ + 10);
  Hub hub(registry());
  try {
    HubServer s(hub, opt);
    s.start();
    EXPECT_EQ(s.stream_port(), s.http_port() + 1);
  } catch (const Error& e) {
    GTEST_SKIP() << "port busy: " << e.what();
  }
}

TEST_F(ServerTest, TokenIsRequired) {
  EXPECT_EQ(request(port_, http::verb::get, "/api/v1/resources").status, 401u);
  EXPECT_EQ(request(port_, http::verb::get, "/api/v1/resources", "nope").status, 401u);
  const auto r = request(port_, http::verb::get, "/api/v1/resources?token=bravo-token");
  EXPECT_EQ(r.status, 200u);
  EXPECT_EQ(r.content_type, "application/json");
  EXPECT_EQ(r.json().at("data").at("sites").size(), 2u);
}

TEST_F(ServerTest, StatusCodes) {
  const auto body = to_json(testing_paths::demo()).dump();
  EXPECT_EQ(request(port_, http::verb::post, "/api/v1/runs", "bravo-token", body).status, 403u);
  EXPECT_EQ(request(port_, http::verb::get, "/api/v1/runs/run-9/status", "alpha-token").status, 404u);
  EXPECT_EQ(request(port_, http::verb::get, "/api/v1/nothing", "alpha-token").status, 404u);
  EXPECT_EQ(request(port_, http::verb::post, "/api/v1/runs", "alpha-token", "{not json").status, 400u);
  EXPECT_EQ(request(port_, http::verb::post, "/api/v1/runs/run-1/commands", "alpha-token", R"({"kind":"stop_experiment"})")
                .status,
            404u);
  const auto denied = request(port_, http::verb::post, "/api/v1/runs/run-1/commands", "bravo-token",
                              R"({"kind":"set_value","topic":"siteB.ctrl.v_set","value":1})");
  EXPECT_EQ(denied.status, 403u);
  EXPECT_EQ(denied.json().at("error"), "PermissionDenied");
}

TEST_F(ServerTest, RunLifecycleOverHttp) {
  const auto run = start_demo(testing_paths::demo());
  server_->wait_for_runs();
  const auto st = request(port_, http::verb::get, "/api/v1/runs/" + run + "/status", "bravo-token");
  ASSERT_EQ(st.status, 200u);
  EXPECT_EQ(st.json().at("data").at("state"), "finished");
  EXPECT_EQ(request(port_, http::verb::post, "/api/v1/runs/" + run + "/commands", "alpha-token",
                    R"({"kind":"stop_experiment"})")
                .status,
            409u);
  const auto csv = request(port_, http::verb::get, "/api/v1/trace?run=" + run + "&topic=siteA.*&format=csv", "alpha-token");
  ASSERT_EQ(csv.status, 200u);
  EXPECT_EQ(csv.content_type, "text/csv");
  EXPECT_EQ(csv.body.substr(0, csv.body.find('\n')), kTraceHeader);
  const auto local = sync::run_local(registry(), testing_paths::demo());
  std::size_t site_a = 0;
  for (const auto& r : local.trace) site_a += r.sample.topic.rfind("siteA.", 0) == 0;
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.body.begin(), csv.body.end(), '\n')), site_a + 1);
  const auto rows = request(port_, http::verb::get, "/api/v1/trace?run=" + run + "&from_ns=0&to_ns=10000000", "alpha-token");
  EXPECT_EQ(rows.status, 200u);
  EXPECT_FALSE(rows.json().at("data").at("rows").empty());
}

TEST_F(ServerTest, WebSocketStreamsNewRows) {
  boost::asio::io_context io;
  beast::websocket::stream<tcp::socket> ws(io);
  ws.next_layer().connect({boost::asio::ip::make_address("127.0.0.1"), port_});
  ws.handshake("127.0.0.1", "/api/v1/stream?token=bravo-token&topic=siteB.*");
  start_demo(testing_paths::demo());
  beast::flat_buffer buf;
  ws.read(buf);
  const auto e = Envelope::from_json(Json::parse(beast::buffers_to_string(buf.data())));
  EXPECT_EQ(e.type, MessageType::stream);
  ASSERT_FALSE(e.payload.at("samples").empty());
  for (const auto& s : e.payload.at("samples")) EXPECT_EQ(s.at("topic").get<std::string>().rfind("siteB.", 0), 0u);
  server_->wait_for_runs();
}

TEST_F(ServerTest, WebSocketNeedsToken) {
  boost::asio::io_context io;
  beast::websocket::stream<tcp::socket> ws(io);
  ws.next_layer().connect({boost::asio::ip::make_address("127.0.0.1"), port_});
  beast::error_code ec;
  ws.handshake("127.0.0.1", "/api/v1/stream", ec);
  EXPECT_TRUE(ec);
}

TEST_F(ServerTest, ServesConsoleFiles) {
  auto r = request(port_, http::verb::get, "/console/");
  EXPECT_EQ(r.status, 200u);
  EXPECT_EQ(r.body, "<html>console</html>");
  EXPECT_EQ(r.content_type.rfind("text/html", 0), 0u);
  r = request(port_, http::verb::get, "/console/app.js");
  EXPECT_EQ(r.status, 200u);
  EXPECT_EQ(r.content_type.rfind("text/javascript", 0) == 0 || r.content_type.rfind("application/javascript", 0) == 0, true);
  EXPECT_EQ(request(port_, http::verb::get, "/console/missing.css").status, 404u);
  EXPECT_EQ(request(port_, http::verb::get, "/console/../secret").status, 400u);
  EXPECT_EQ(request(port_, http::verb::get, "/").status, 302u);
}

TEST_F(ServerTest, RemoteParticipantJoinsOverStreamPort) {
  auto exp = testing_paths::demo();
  const auto ref = sync::run_local(registry(), exp).trace_csv();
  exp.participants[1].external = true;

  auto t = TcpTransport::connect("127.0.0.1", server_->stream_port());
  Envelope join;
  join.type = MessageType::join;
  join.seq = 1;
  join.payload = {{"token", "bravo-token"}, {"participant", "ctrl"}};
  t->send(join);
  std::optional<Envelope> ack;
  while (!ack) ack = t->receive(std::chrono::milliseconds{100});
  ASSERT_EQ(ack->type, MessageType::join_ack);
  for (int i = 0; i < 50 && server_->waiting_participants().empty(); ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds{10});
  EXPECT_EQ(server_->waiting_participants(), std::vector<std::string>{"ctrl"});

  auto d = *exp.participant("ctrl");
  d.external = false;
  auto part = plant::make_participant(d, exp.seed);
  std::thread peer([&] { serve_participant(*t, *part, ack->session); });
  const auto run = start_demo(exp);
  server_->wait_for_runs();
  t->close();
  peer.join();
  EXPECT_EQ(hub_.run_state(run), RunState::finished);
  EXPECT_EQ(hub_.store().csv(run), ref);
}

TEST_F(ServerTest, OperatorCommandsOverStreamPort) {
  auto t = TcpTransport::connect("127.0.0.1", server_->stream_port());
  auto send = [&](MessageType type, std::uint64_t seq, Json payload) {
    Envelope e;
    e.type = type;
    e.seq = seq;
    e.payload = std::move(payload);
    t->send(e);
    std::optional<Envelope> r;
    while (!r) r = t->receive(std::chrono::milliseconds{100});
    return *r;
  };
  const auto ack = send(MessageType::join, 1, {{"token", "bravo-token"}, {"operator", "bob"}});
  ASSERT_EQ(ack.type, MessageType::join_ack);
  EXPECT_EQ(ack.payload.at("granted").size(), 3u);
  auto res = send(MessageType::command, 2, {{"kind", "get_status"}});
  EXPECT_EQ(res.type, MessageType::command_result);
  EXPECT_TRUE(res.payload.at("ok").get<bool>());
  res = send(MessageType::command, 3, {{"kind", "start_experiment"}, {"experiment", to_json(testing_paths::demo())}});
  EXPECT_EQ(res.payload.at("error"), "PermissionDenied");
  res = send(MessageType::publish, 4, Json::object());
  EXPECT_EQ(res.type, MessageType::error);
}

TEST_F(ServerTest, BadTokenOnStreamPortIsRejected) {
  auto t = TcpTransport::connect("127.0.0.1", server_->stream_port());
  Envelope join;
  join.type = MessageType::join;
  join.seq = 1;
  join.payload = {{"token", "wrong"}};
  t->send(join);
  std::optional<Envelope> r;
  while (!r) r = t->receive(std::chrono::milliseconds{100});
  EXPECT_EQ(r->type, MessageType::error);
  EXPECT_EQ(r->payload.at("error"), "PermissionDenied");
}

TEST_F(ServerTest, PersistWritesOneTracePerRun) {
  const auto run = start_demo(testing_paths::demo());
  server_->wait_for_runs();
  const auto dir = temp_dir("data");
  EXPECT_GT(server_->persist(dir), 0u);
  std::ifstream is(dir / run / "trace.csv", std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  EXPECT_EQ(text, hub_.store().csv(run));
  fs::remove_all(dir);
}
