#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <boost/asio.hpp>

#include "fedkit/hub/remote_participant.hpp"

namespace fedkit::hub {

/// Newline-delimited JSON envelopes over a TCP socket. A reader thread parses
/// incoming lines into a queue; malformed lines close the channel.
class TcpTransport final : public Transport {
 public:
  using tcp = boost::asio::ip::tcp;

  explicit TcpTransport(tcp::socket socket) : socket_(std::move(socket)) {
    boost::system::error_code ec;
    socket_.set_option(tcp::no_delay(true), ec);
    reader_ = std::thread([this] { read_loop(); });
  }

  ~TcpTransport() override {
    close();
    if (reader_.joinable()) reader_.join();
  }

  static std::shared_ptr<TcpTransport> connect(const std::string& host, unsigned short port) {
    auto io = std::make_shared<boost::asio::io_context>();
    tcp::socket s(*io);
    boost::system::error_code ec;
    tcp::resolver resolver(*io);
    auto endpoints = resolver.resolve(host, std::to_string(port), ec);
    if (!ec) boost::asio::connect(s, endpoints, ec);
    if (ec) fail(ErrorCode::ProtocolError, "cannot connect to " + host + ":" + std::to_string(port) + ": " + ec.message());
    auto t = std::make_shared<TcpTransport>(std::move(s));
    t->io_ = io;
    return t;
  }

  void send(const Envelope& e) override {
    const auto line = e.line();
    std::lock_guard lock(write_mu_);
    boost::system::error_code ec;
    boost::asio::write(socket_, boost::asio::buffer(line), ec);
    if (ec) fail(ErrorCode::ProtocolError, "send failed: " + ec.message());
  }

  std::optional<Envelope> receive(std::chrono::milliseconds timeout) override { return queue_.pop(timeout); }

  void close() override {
    if (closed_.exchange(true)) return;
    boost::system::error_code ec;
    socket_.shutdown(tcp::socket::shutdown_both, ec);
    socket_.close(ec);
    queue_.close();
  }

 private:
  void read_loop() {
    boost::asio::streambuf buf;
    for (;;) {
      boost::system::error_code ec;
      boost::asio::read_until(socket_, buf, '\n', ec);
      if (ec) break;
      std::istream is(&buf);
      std::string line;
      std::getline(is, line);
      if (line.empty()) continue;
      try {
        queue_.push(Envelope::parse(line));
      } catch (const Error& err) {
        queue_.close(err.what());
        break;
      }
    }
    queue_.close("connection closed");
  }

  std::shared_ptr<boost::asio::io_context> io_;
  tcp::socket socket_;
  std::mutex write_mu_;
  EnvelopeQueue queue_;
  std::atomic<bool> closed_{false};
  std::thread reader_;
};

}  // namespace fedkit::hub
