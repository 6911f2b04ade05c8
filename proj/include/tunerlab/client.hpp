#pragma once

// Blocking WebSocket client for the control protocol. Good enough for
// scripts, tests and samples; the browser UI speaks the same frames.

#include <functional>
#include <optional>
#include <string>
#include <utility>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>

#include "tunerlab/error.hpp"

namespace tunerlab::client {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = boost::beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

class Client {
public:
  Client(const std::string& host, unsigned short port) {
    beast::error_code ec;
    tcp::resolver resolver(ioc_);
    const auto results = resolver.resolve(host, std::to_string(port), ec);
    if (!ec) asio::connect(ws_.next_layer(), results.begin(), results.end(), ec);
    if (!ec) ws_.handshake(host + ":" + std::to_string(port), "/", ec);
    if (ec) throw Error("cannot connect to " + host + ":" + std::to_string(port) + ": " + ec.message());
    ws_.text(true);
  }

  void send(const json& msg) { send_text(msg.dump()); }

  void send_text(const std::string& text) {
    beast::error_code ec;
    ws_.write(asio::buffer(text), ec);
    if (ec) throw Error("send failed: " + ec.message());
  }

  // Next frame, or nothing once the server has closed the connection.
  std::optional<json> read() {
    beast::flat_buffer buffer;
    beast::error_code ec;
    ws_.read(buffer, ec);
    if (ec) return std::nullopt;
    return json::parse(beast::buffers_to_string(buffer.data()));
  }

  // Sends one command and returns its reply. Telemetry frames that arrive
  // in between are handed to `on_telemetry` rather than dropped.
  json request(const json& msg, const std::function<void(const json&)>& on_telemetry = {}) {
    send(msg);
    for (;;) {
      auto frame = read();
      if (!frame) throw Error("connection closed while waiting for a reply");
      if (frame->value("type", "") != "telemetry") return *frame;
      if (on_telemetry) on_telemetry(*frame);
    }
  }

  void close() {
    beast::error_code ec;
    ws_.close(websocket::close_code::normal, ec);
  }

private:
  asio::io_context ioc_;
  websocket::stream<tcp::socket> ws_{ioc_};
};

}  // namespace tunerlab::client
