#pragma once

// Long-running service: one thread owns the simulator and paces it, one
// thread runs the WebSocket side. They meet only at the inbox (commands in)
// and at posted broadcasts (frames out).

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "tunerlab/control.hpp"
#include "tunerlab/error.hpp"
#include "tunerlab/netsim.hpp"
#include "tunerlab/scenario.hpp"

namespace tunerlab::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = boost::beast::websocket;
using tcp = asio::ip::tcp;

enum class Pace { realtime, fast };

inline Pace parse_pace(const std::string& text) {
  if (text == "realtime") return Pace::realtime;
  if (text == "fast") return Pace::fast;
  throw RangeError("pace", "pace must be 'realtime' or 'fast', got '" + text + "'");
}

struct Endpoint {
  std::string host = "127.0.0.1";
  unsigned short port = 8080;
};

// "host:port", ":port" or "port".
inline Endpoint parse_listen(const std::string& text) {
  Endpoint ep;
  const auto colon = text.rfind(':');
  std::string port = text;
  if (colon != std::string::npos) {
    if (colon > 0) ep.host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    const long value = std::stol(port, &used);
    if (used != port.size() || value < 0 || value > 65535) throw std::invalid_argument("port");
    ep.port = static_cast<unsigned short>(value);
  } catch (const std::exception&) {
    throw RangeError("listen", "bad listen address '" + text + "'");
  }
  return ep;
}

class Service;

class Session : public std::enable_shared_from_this<Session> {
public:
  Session(tcp::socket socket, Service& owner) : ws_(std::move(socket)), owner_(owner) {}

  void start();
  void send(std::shared_ptr<const std::string> frame) {
    queue_.push_back(std::move(frame));
    if (queue_.size() == 1) write_next();
  }
  void close() {
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

private:
  void read_next();
  void write_next() {
    ws_.text(true);
    ws_.async_write(asio::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->drop();
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write_next();
    });
  }
  void drop();

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  Service& owner_;
};

struct ServiceOptions {
  Endpoint listen;
  Pace pace = Pace::realtime;
};

class Service {
public:
  Service(scenario::Scenario scenario, ServiceOptions options)
      : scenario_(std::move(scenario)),
        options_(options),
        sim_(scenario_.link, netsim::SimOptions{true, false, true}),
        processor_(sim_, scenario_.duration_s) {
    scenario::validate(scenario_);
    for (const auto& f : scenario_.flows) sim_.add_flow(f.spec());
    sim_.set_telemetry_sink([this](const TelemetrySample& s) { broadcast(control::telemetry_frame(s).dump()); });

    beast::error_code ec;
    const auto address = asio::ip::make_address(options_.listen.host, ec);
    if (ec) throw Error("cannot listen on '" + options_.listen.host + "': " + ec.message());
    const tcp::endpoint endpoint{address, options_.listen.port};
    acceptor_.open(endpoint.protocol(), ec);
    if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(endpoint, ec);
    if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) {
      throw Error("cannot listen on " + options_.listen.host + ":" + std::to_string(options_.listen.port) + ": " +
                  ec.message());
    }
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ~Service() {
    request_stop();
    join();
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() {
    accept_next();
    io_thread_ = std::thread([this] { ioc_.run(); });
    sim_thread_ = std::thread([this] { sim_loop(); });
    spdlog::info("serving on {}:{} ({} pacing)", options_.listen.host, port(),
                 options_.pace == Pace::realtime ? "realtime" : "fast");
  }

  // Blocks until a client sends stop or request_stop is called.
  void wait() {
    if (sim_thread_.joinable()) sim_thread_.join();
    shutdown_io();
  }

  void request_stop() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
  }

  // Only meaningful once wait() has returned.
  const netsim::Simulator& simulator() const noexcept { return sim_; }
  // True once the scenario's duration has been simulated; safe from any thread.
  bool finished_run() const noexcept { return reached_end_; }

  // Called from the io thread.
  void submit(std::weak_ptr<Session> from, std::string text) {
    {
      std::lock_guard lock(mutex_);
      inbox_.emplace_back(std::move(from), std::move(text));
    }
    cv_.notify_all();
  }
  void attach(const std::shared_ptr<Session>& s) { sessions_.insert(s); }
  void detach(const std::shared_ptr<Session>& s) { sessions_.erase(s); }

private:
  using Command = std::pair<std::weak_ptr<Session>, std::string>;

  void accept_next() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<Session>(std::move(socket), *this)->start();
      accept_next();
    });
  }

  void broadcast(std::string text) {
    auto frame = std::make_shared<const std::string>(std::move(text));
    asio::post(ioc_, [this, frame] {
      for (const auto& s : sessions_) s->send(frame);
    });
  }

  void reply(const std::weak_ptr<Session>& to, std::string text) {
    auto frame = std::make_shared<const std::string>(std::move(text));
    asio::post(ioc_, [to, frame] {
      if (auto s = to.lock()) s->send(frame);
    });
  }

  bool drain_inbox() {
    std::deque<Command> batch;
    {
      std::lock_guard lock(mutex_);
      batch.swap(inbox_);
    }
    for (auto& [from, text] : batch) {
      spdlog::debug("command: {}", text);
      const auto answer = processor_.handle_text(text);
      if (answer.value("type", "") == "error") spdlog::info("rejected command: {}", answer.value("message", ""));
      reply(from, answer.dump());
    }
    return processor_.stop_requested();
  }

  void sim_loop() {
    using clock = std::chrono::steady_clock;
    const auto wall_start = clock::now();
    const SimTime end = from_seconds(scenario_.duration_s);
    try {
      for (;;) {
        if (drain_inbox()) break;
        {
          std::lock_guard lock(mutex_);
          if (stop_) break;
        }
        if (!reached_end_) {
          SimTime target;
          if (options_.pace == Pace::realtime) {
            target = std::chrono::duration_cast<SimTime>(clock::now() - wall_start);
          } else {
            target = sim_.now() + kTelemetryInterval;
          }
          target = std::min(std::max(target, sim_.now()), end);
          sim_.run(target);
          if (sim_.now() >= end) {
            reached_end_ = true;
            spdlog::info("scenario reached its {} s duration; idling until stop", scenario_.duration_s);
          }
        }
        std::unique_lock lock(mutex_);
        const auto ready = [this] { return stop_ || !inbox_.empty(); };
        if (reached_end_) {
          cv_.wait(lock, ready);
        } else if (options_.pace == Pace::realtime) {
          cv_.wait_for(lock, std::chrono::milliseconds(2), ready);
        }
      }
    } catch (const std::exception& e) {
      spdlog::error("simulation stopped: {}", e.what());
    }
    for (const auto& v : sim_.invariant_violations()) spdlog::error("invariant violated: {}", v);
  }

  void shutdown_io() {
    if (!io_thread_.joinable()) return;
    const auto on_io = [this](auto fn) {
      std::promise<void> done;
      auto waited = done.get_future();
      asio::post(ioc_, [&] {
        fn();
        done.set_value();
      });
      waited.wait();
    };
    on_io([this] {
      beast::error_code ec;
      acceptor_.close(ec);
    });
    // Let queued replies (the stop ack among them) reach their sockets.
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    on_io([this] {
      for (const auto& s : sessions_) s->close();
      sessions_.clear();
    });
    work_.reset();
    ioc_.stop();
    io_thread_.join();
  }

  void join() {
    if (sim_thread_.joinable()) sim_thread_.join();
    shutdown_io();
  }

  scenario::Scenario scenario_;
  ServiceOptions options_;
  netsim::Simulator sim_;
  control::CommandProcessor processor_;

  asio::io_context ioc_{1};
  asio::executor_work_guard<asio::io_context::executor_type> work_ = asio::make_work_guard(ioc_);
  tcp::acceptor acceptor_{ioc_};
  std::set<std::shared_ptr<Session>> sessions_;  // io thread only

  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Command> inbox_;
  bool stop_ = false;
  std::atomic<bool> reached_end_ = false;

  std::thread io_thread_;
  std::thread sim_thread_;
};

inline void Session::start() {
  ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
    if (ec) return;
    self->owner_.attach(self);
    self->read_next();
  });
}

inline void Session::read_next() {
  ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
    if (ec) return self->drop();
    self->owner_.submit(self->weak_from_this(), beast::buffers_to_string(self->buffer_.data()));
    self->buffer_.consume(self->buffer_.size());
    self->read_next();
  });
}

inline void Session::drop() { owner_.detach(shared_from_this()); }

}  // namespace tunerlab::service
