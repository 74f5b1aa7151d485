#pragma once

#include <sys/socket.h>
#include <sys/time.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "fedkit/hub/hub.hpp"
#include "fedkit/hub/tcp_transport.hpp"
#include "fedkit/sync/runner.hpp"

namespace fedkit::hub {

struct ServerOptions {
  std::string address{"127.0.0.1"};
  /// 0 picks a free port.
  unsigned short http_port{8080};
  /// NDJSON stream endpoint; defaults to http_port + 1 (or a free port when
  /// http_port is 0).
  std::optional<unsigned short> stream_port;
  std::filesystem::path console_dir;
  sync::RunOptions run;
  std::chrono::milliseconds batch{100};
  std::chrono::milliseconds remote_timeout{std::chrono::seconds{30}};
  std::function<void(const std::string&)> log;
};

namespace http_detail {

inline std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size()) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

struct Target {
  std::string path;
  std::map<std::string, std::string> query;
};

inline Target parse_target(std::string_view target) {
  Target t;
  const auto q = target.find('?');
  t.path = url_decode(target.substr(0, q));
  if (q == std::string_view::npos) return t;
  for (const auto& kv : split(target.substr(q + 1), '&')) {
    if (kv.empty()) continue;
    const auto eq = kv.find('=');
    t.query[url_decode(kv.substr(0, eq))] = eq == std::string::npos ? "" : url_decode(kv.substr(eq + 1));
  }
  return t;
}

inline unsigned status_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::PermissionDenied: return 403;
    case ErrorCode::NoActiveRun: return 409;
    case ErrorCode::UnknownRun:
    case ErrorCode::UnknownSite: return 404;
    case ErrorCode::InvalidArgument:
    case ErrorCode::SchemaError:
    case ErrorCode::SyntaxError:
    case ErrorCode::ProtocolError:
    case ErrorCode::UnknownTopic:
    case ErrorCode::IncompatibleUnit:
    case ErrorCode::UnmappedTopic: return 400;
    default: return 500;
  }
}

inline std::string mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

}  // namespace http_detail

/// Hub daemon: HTTP command API, WebSocket sample stream, static console
/// files, and the NDJSON endpoint where remote participants and operators
/// join. Runs started through the API execute on their own thread.
class HubServer {
 public:
  using tcp = boost::asio::ip::tcp;
  using Request = boost::beast::http::request<boost::beast::http::string_body>;
  using Response = boost::beast::http::response<boost::beast::http::string_body>;

  HubServer(Hub& hub, ServerOptions opt) : hub_(hub), opt_(std::move(opt)), http_acc_(io_), stream_acc_(io_) {}
  ~HubServer() { stop(); }
  HubServer(const HubServer&) = delete;
  HubServer& operator=(const HubServer&) = delete;

  void start() {
    const auto addr = parse_address(opt_.address);
    bind(http_acc_, {addr, opt_.http_port});
    const unsigned short sp = opt_.stream_port.value_or(opt_.http_port == 0 ? 0 : opt_.http_port + 1);
    bind(stream_acc_, {addr, sp});
    hub_.set_launcher([this](const std::string& run) { launch(run); });
    accept_http();
    accept_stream();
    io_thread_ = std::thread([this] { io_.run(); });
    log("hub listening on http://" + opt_.address + ":" + std::to_string(http_port()) + " (stream port " +
        std::to_string(stream_port()) + ")");
  }

  /// Stops runs at their next boundary, closes every connection and waits for
  /// the worker threads.
  void stop() {
    if (stopping_.exchange(true)) return;
    hub_.stop_all();
    boost::asio::post(io_, [this] {
      boost::system::error_code ec;
      http_acc_.close(ec);
      stream_acc_.close(ec);
    });
    {
      std::lock_guard lock(mu_);
      for (auto& [_, r] : remotes_) r.transport->close();
      for (auto& t : transports_) t->close();
    }
    join_all(run_threads_);
    join_all(conn_threads_);
    io_.stop();
    if (io_thread_.joinable()) io_thread_.join();
    hub_.set_launcher({});
  }

  unsigned short http_port() const { return http_acc_.local_endpoint().port(); }
  unsigned short stream_port() const { return stream_acc_.local_endpoint().port(); }

  /// Participants joined over the stream endpoint and not yet bound to a run.
  std::vector<std::string> waiting_participants() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, _] : remotes_) out.push_back(id);
    return out;
  }

  /// Blocks until every run launched so far has ended.
  void wait_for_runs() { join_all(run_threads_); }

  /// Writes `<dir>/<run>/trace.csv` for every run in the store.
  std::size_t persist(const std::filesystem::path& dir) const {
    std::size_t rows = 0;
    for (const auto& run : hub_.runs()) {
      std::filesystem::create_directories(dir / run);
      std::ofstream os(dir / run / "trace.csv", std::ios::binary);
      const auto r = hub_.store().rows(run);
      rows += r.size();
      write_trace_csv(os, r);
    }
    return rows;
  }

 private:
  struct Remote {
    std::shared_ptr<TcpTransport> transport;
    std::string site;
    std::string session;
  };

  static boost::asio::ip::address parse_address(const std::string& a) {
    boost::system::error_code ec;
    auto addr = boost::asio::ip::make_address(a == "localhost" ? "127.0.0.1" : a, ec);
    if (ec) fail(ErrorCode::BindError, "bad listen address '" + a + "'");
    return addr;
  }

  void bind(tcp::acceptor& acc, const tcp::endpoint& ep) {
    boost::system::error_code ec;
    acc.open(ep.protocol(), ec);
    if (!ec) acc.set_option(boost::asio::socket_base::reuse_address(true), ec);
    if (!ec) acc.bind(ep, ec);
    if (!ec) acc.listen(boost::asio::socket_base::max_listen_connections, ec);
    if (ec)
      fail(ErrorCode::BindError, "cannot listen on " + ep.address().to_string() + ":" + std::to_string(ep.port()) + ": " +
                                     ec.message());
  }

  void log(const std::string& msg) const {
    if (opt_.log) opt_.log(msg);
  }

  struct Task {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };

  void join_all(std::list<Task>& tasks) {
    for (;;) {
      Task t;
      {
        std::lock_guard lock(mu_);
        if (tasks.empty()) return;
        t = std::move(tasks.front());
        tasks.pop_front();
      }
      if (t.thread.joinable()) t.thread.join();
    }
  }

  void spawn(std::list<Task>& where, std::function<void()> fn) {
    std::list<Task> finished;
    {
      std::lock_guard lock(mu_);
      for (auto it = where.begin(); it != where.end();) {
        auto next = std::next(it);
        if (*it->done) finished.splice(finished.end(), where, it);
        it = next;
      }
      auto done = std::make_shared<std::atomic<bool>>(false);
      where.push_back({std::thread([fn = std::move(fn), done] {
                         fn();
                         *done = true;
                       }),
                       done});
    }
    for (auto& t : finished) t.thread.join();
  }

  static void set_read_timeout(tcp::socket& s, int seconds) {
    timeval tv{seconds, 0};
    ::setsockopt(s.native_handle(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  }

  void accept_http() {
    http_acc_.async_accept([this](boost::system::error_code ec, tcp::socket s) {
      if (ec || stopping_) return;
      auto sock = std::make_shared<tcp::socket>(std::move(s));
      spawn(conn_threads_, [this, sock] { serve_http(std::move(*sock)); });
      accept_http();
    });
  }

  void accept_stream() {
    stream_acc_.async_accept([this](boost::system::error_code ec, tcp::socket s) {
      if (ec || stopping_) return;
      auto t = std::make_shared<TcpTransport>(std::move(s));
      {
        std::lock_guard lock(mu_);
        transports_.push_back(t);
      }
      spawn(conn_threads_, [this, t] { serve_stream(t); });
      accept_stream();
    });
  }

  // runs

  void launch(const std::string& run) {
    spawn(run_threads_, [this, run] {
      try {
        const auto exp = hub_.run_experiment(run);
        auto parts = sync::build_participants(exp, [this](const experiment::ParticipantDescriptor& d) {
          return claim_remote(d);
        });
        sync::execute_run(hub_, run, std::move(parts), opt_.run);
        log(run + " ended: " + std::string(to_string(hub_.run_state(run))));
      } catch (const Error& e) {
        if (hub_.run_state(run) != RunState::failed) hub_.set_run_state(run, RunState::failed, e.what());
        log(run + " failed: " + e.what());
      }
    });
  }

  sync::ParticipantPtr claim_remote(const experiment::ParticipantDescriptor& d) {
    Remote r;
    {
      std::lock_guard lock(mu_);
      auto it = remotes_.find(d.id);
      if (it == remotes_.end()) fail(ErrorCode::InvalidArgument, "external participant " + d.id + " has not joined");
      r = it->second;
      remotes_.erase(it);
    }
    if (r.site != d.site_id)
      fail(ErrorCode::PermissionDenied, d.id + " joined with a " + r.site + " token but belongs to " + d.site_id);
    return std::make_shared<RemoteParticipant>(d, r.transport, r.session, opt_.remote_timeout);
  }

  // NDJSON endpoint

  std::optional<std::string> site_for_token(const std::string& token) const {
    if (token.empty()) return std::nullopt;
    for (const auto& [id, s] : hub_.registry().sites)
      if (!s.token.empty() && s.token == token) return id;
    return std::nullopt;
  }

  void serve_stream(const std::shared_ptr<TcpTransport>& t) {
    std::uint64_t seq = 0;
    auto reply = [&](MessageType type, Json payload, const std::string& session = "") {
      Envelope e;
      e.type = type;
      e.session = session;
      e.seq = ++seq;
      e.payload = std::move(payload);
      t->send(e);
    };
    try {
      std::optional<Envelope> join;
      for (int i = 0; i < 100 && !join && !stopping_; ++i) join = t->receive(std::chrono::milliseconds{100});
      if (!join) return t->close();
      if (join->type != MessageType::join) {
        reply(MessageType::error, {{"error", "ProtocolError"}, {"message", "first message must be join"}});
        return t->close();
      }
      const auto site = site_for_token(join->payload.value("token", std::string()));
      if (!site) {
        reply(MessageType::error, {{"error", "PermissionDenied"}, {"message", "bad token"}});
        return t->close();
      }
      if (join->payload.contains("participant")) {
        const auto id = join->payload.at("participant").get<std::string>();
        const std::string session = "r-" + std::to_string(++remote_counter_);
        {
          std::lock_guard lock(mu_);
          if (remotes_.count(id)) {
            reply(MessageType::error, {{"error", "DuplicateParticipant"}, {"message", id}});
            return t->close();
          }
          remotes_[id] = {t, *site, session};
        }
        reply(MessageType::join_ack, {{"participant", id}, {"site", *site}}, session);
        log(id + " joined from " + *site);
        return;  // the run's RemoteParticipant owns the channel from here
      }
      auto sess = hub_.register_operator(*site, join->payload.at("token").get<std::string>(),
                                         join->payload.value("operator", std::string("operator")));
      Json granted = Json::array();
      for (auto k : sess.granted) granted.push_back(std::string(to_string(k)));
      reply(MessageType::join_ack, {{"operator", sess.principal}, {"granted", granted}}, sess.id);
      while (!stopping_) {
        auto e = t->receive(std::chrono::milliseconds{200});
        if (!e) continue;
        if (e->type != MessageType::command) {
          reply(MessageType::error, {{"error", "ProtocolError"}, {"message", "operators may only send commands"}}, sess.id);
          continue;
        }
        CommandResult res;
        try {
          res = hub_.execute_command(sess.id, Command::from_json(e->payload));
        } catch (const Error& err) {
          res = CommandResult::failure(err);
        }
        reply(MessageType::command_result, res.to_json(), sess.id);
      }
      hub_.close_session(sess.id);
    } catch (const Error&) {
    }
  }

  // HTTP

  std::optional<Session> operator_session(const Request& req, const http_detail::Target& target) {
    std::string token;
    if (auto it = req.find(boost::beast::http::field::authorization); it != req.end()) {
      const std::string v(it->value());
      if (v.rfind("Bearer ", 0) == 0) token = v.substr(7);
    }
    if (token.empty())
      if (auto it = target.query.find("token"); it != target.query.end()) token = it->second;
    const auto site = site_for_token(token);
    if (!site) return std::nullopt;
    std::lock_guard lock(mu_);
    if (auto it = operator_sessions_.find(token); it != operator_sessions_.end())
      if (auto s = hub_.session(it->second)) return s;
    auto s = hub_.register_operator(*site, token, "http");
    operator_sessions_[token] = s.id;
    return s;
  }

  static Response json_response(const Request& req, unsigned status, const Json& body) {
    Response res{static_cast<boost::beast::http::status>(status), req.version()};
    res.set(boost::beast::http::field::content_type, "application/json");
    res.set(boost::beast::http::field::access_control_allow_origin, "*");
    res.keep_alive(false);
    res.body() = body.dump();
    res.prepare_payload();
    return res;
  }

  static Response command_response(const Request& req, const CommandResult& r, unsigned ok_status = 200) {
    return json_response(req, r.ok ? ok_status : http_detail::status_for(*r.error), r.to_json());
  }

  Response static_file(const Request& req, const std::string& path) {
    namespace fs = std::filesystem;
    std::string rel = path.substr(std::string("/console").size());
    if (rel.empty() || rel == "/") rel = "/index.html";
    const fs::path p = fs::path(rel).relative_path();
    for (const auto& part : p)
      if (part == "..") return json_response(req, 400, {{"error", "InvalidArgument"}, {"message", "bad path"}});
    const auto file = opt_.console_dir / p;
    std::ifstream is(file, std::ios::binary);
    if (opt_.console_dir.empty() || !is) return json_response(req, 404, {{"error", "NotFound"}, {"message", rel}});
    Response res{boost::beast::http::status::ok, req.version()};
    res.set(boost::beast::http::field::content_type, http_detail::mime_type(file));
    res.keep_alive(false);
    res.body().assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    res.prepare_payload();
    return res;
  }

  Response handle(const Request& req, const http_detail::Target& target) {
    namespace http = boost::beast::http;
    const auto& path = target.path;
    if (req.method() == http::verb::options) return json_response(req, 204, Json::object());
    if (path == "/") {
      Response res{http::status::found, req.version()};
      res.set(http::field::location, "/console/");
      res.keep_alive(false);
      res.prepare_payload();
      return res;
    }
    if (path == "/console" || path.rfind("/console/", 0) == 0) return static_file(req, path);
    if (path.rfind("/api/v1/", 0) != 0) return json_response(req, 404, {{"error", "NotFound"}, {"message", path}});

    const auto sess = operator_session(req, target);
    if (!sess) return json_response(req, 401, {{"error", "Unauthorized"}, {"message", "missing or unknown site token"}});

    auto exec = [&](CommandKind kind, Json args, unsigned ok_status = 200) {
      return command_response(req, hub_.execute_command(sess->id, {kind, std::move(args)}), ok_status);
    };
    auto body = [&]() -> Json {
      if (req.body().empty()) return Json::object();
      return parse_json_text(req.body(), "request body");
    };

    const auto parts = split(path.substr(std::string("/api/v1/").size()), '/');
    try {
      if (parts.size() == 1 && parts[0] == "resources" && req.method() == http::verb::get)
        return exec(CommandKind::list_resources, Json::object());
      if (parts.size() == 1 && parts[0] == "trace" && req.method() == http::verb::get) {
        Json args = Json::object();
        if (auto it = target.query.find("run"); it != target.query.end()) args["run"] = it->second;
        if (auto it = target.query.find("topic"); it != target.query.end() && !it->second.empty()) args["topic"] = it->second;
        for (const char* k : {"from_ns", "to_ns"})
          if (auto it = target.query.find(k); it != target.query.end() && !it->second.empty())
            args[k] = std::stoll(it->second);
        auto r = hub_.execute_command(sess->id, {CommandKind::query_trace, args});
        if (r.ok && target.query.count("format") && target.query.at("format") == "csv") {
          TraceQuery q{args.at("run").get<std::string>(), std::nullopt, std::nullopt, std::nullopt};
          if (args.contains("topic")) q.topic = args.at("topic").get<std::string>();
          if (args.contains("from_ns")) q.from = SimTime{args.at("from_ns").get<std::int64_t>()};
          if (args.contains("to_ns")) q.to = SimTime{args.at("to_ns").get<std::int64_t>()};
          Response res{http::status::ok, req.version()};
          res.set(http::field::content_type, "text/csv");
          res.keep_alive(false);
          res.body() = trace_csv(hub_.query_trace(q));
          res.prepare_payload();
          return res;
        }
        return command_response(req, r);
      }
      if (parts.size() == 1 && parts[0] == "runs") {
        if (req.method() == http::verb::get) return exec(CommandKind::get_status, Json::object());
        if (req.method() == http::verb::post) {
          Json b = body();
          Json args = b.contains("experiment") || b.contains("run") ? b : Json{{"experiment", b}};
          return exec(CommandKind::start_experiment, args, 201);
        }
      }
      if (parts.size() == 3 && parts[0] == "runs" && parts[2] == "status" && req.method() == http::verb::get)
        return exec(CommandKind::get_status, {{"run", parts[1]}});
      if (parts.size() == 3 && parts[0] == "runs" && parts[2] == "commands" && req.method() == http::verb::post) {
        auto cmd = Command::from_json(body(), "request body");
        cmd.args["run"] = parts[1];
        return command_response(req, hub_.execute_command(sess->id, cmd));
      }
    } catch (const Error& e) {
      return json_response(req, http_detail::status_for(e.code()),
                           {{"ok", false}, {"error", std::string(to_string(e.code()))}, {"message", e.what()}});
    } catch (const std::exception& e) {
      return json_response(req, 400, {{"ok", false}, {"error", "InvalidArgument"}, {"message", e.what()}});
    }
    return json_response(req, 404, {{"error", "NotFound"}, {"message", path}});
  }

  void serve_http(tcp::socket socket) {
    namespace beast = boost::beast;
    namespace http = beast::http;
    set_read_timeout(socket, 5);
    beast::flat_buffer buffer;
    Request req;
    beast::error_code ec;
    http::read(socket, buffer, req, ec);
    if (ec) return;
    const auto target = http_detail::parse_target(std::string(req.target()));
    if (beast::websocket::is_upgrade(req)) {
      if (target.path != "/api/v1/stream") return;
      auto sess = operator_session(req, target);
      if (!sess) {
        http::write(socket, json_response(req, 401, {{"error", "Unauthorized"}}), ec);
        return;
      }
      return serve_websocket(std::move(socket), req, target, *sess);
    }
    auto res = handle(req, target);
    http::write(socket, res, ec);
    socket.shutdown(tcp::socket::shutdown_both, ec);
  }

  /// Pushes new trace rows, batched every opt_.batch, as `stream` envelopes.
  /// Query parameters `run` and `topic` (glob) filter the rows.
  void serve_websocket(tcp::socket socket, const Request& req, const http_detail::Target& target, const Session& sess) {
    namespace beast = boost::beast;
    if (!sess.granted.count(CommandKind::query_trace)) {
      beast::error_code ec;
      beast::http::write(socket, json_response(req, 403, {{"error", "PermissionDenied"}}), ec);
      return;
    }
    beast::websocket::stream<tcp::socket> ws(std::move(socket));
    beast::error_code ec;
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    const auto run_filter = target.query.count("run") ? target.query.at("run") : std::string();
    const auto topic_filter = target.query.count("topic") ? target.query.at("topic") : std::string();
    struct Pending {
      std::mutex mu;
      std::vector<std::pair<std::string, TraceRow>> rows;
    };
    auto pending = std::make_shared<Pending>();
    const int sub = hub_.store().subscribe([pending, run_filter, topic_filter](const std::string& run, const TraceRow& r) {
      if (!run_filter.empty() && run != run_filter) return;
      if (!topic_filter.empty() && !glob_match(topic_filter, r.sample.topic)) return;
      std::lock_guard lock(pending->mu);
      pending->rows.emplace_back(run, r);
    });
    std::uint64_t seq = 0;
    while (!stopping_) {
      std::this_thread::sleep_for(opt_.batch);
      std::vector<std::pair<std::string, TraceRow>> rows;
      {
        std::lock_guard lock(pending->mu);
        rows.swap(pending->rows);
      }
      if (rows.empty()) continue;
      std::map<std::string, Json> by_run;
      std::int64_t latest = 0;
      for (const auto& [run, r] : rows) {
        auto j = sample_to_json(r.sample);
        j["wall_time_ns"] = r.wall_time.count();
        if (!by_run.count(run)) by_run[run] = Json::array();
        by_run[run].push_back(std::move(j));
        latest = std::max(latest, r.sample.sim_time.count());
      }
      for (auto& [run, samples] : by_run) {
        Envelope e;
        e.type = MessageType::stream;
        e.session = sess.id;
        e.seq = ++seq;
        e.sim_time_ns = latest;
        e.payload = {{"run", run}, {"samples", std::move(samples)}};
        ws.write(boost::asio::buffer(e.to_json().dump()), ec);
        if (ec) break;
      }
      if (ec) break;
    }
    hub_.store().unsubscribe(sub);
    if (!ec) ws.close(beast::websocket::close_code::going_away, ec);
  }

  Hub& hub_;
  ServerOptions opt_;
  boost::asio::io_context io_;
  tcp::acceptor http_acc_;
  tcp::acceptor stream_acc_;
  std::thread io_thread_;
  std::atomic<bool> stopping_{false};
  mutable std::mutex mu_;
  std::list<Task> run_threads_;
  std::list<Task> conn_threads_;
  std::map<std::string, Remote> remotes_;
  std::vector<std::shared_ptr<TcpTransport>> transports_;
  std::map<std::string, std::string> operator_sessions_;
  std::atomic<std::uint64_t> remote_counter_{0};
};

}  // namespace fedkit::hub
