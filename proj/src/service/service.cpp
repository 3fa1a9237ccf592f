// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/service/service.hpp"

#include "fvs/error.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

namespace fvs {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

FrameRenderer::FrameRenderer(const GaussianSet& gaussians, const NeuralPointCloud& points,
                             std::optional<ResolverWeights> weights, PipelineOptions options, SessionState& state)
    : pipeline_(gaussians, points, std::move(weights), options), state_(state) {}

RenderedFrame FrameRenderer::tick() {
  const SessionSnapshot snap = state_.snapshot();
  PipelineOptions& o = pipeline_.options();
  o.mode = snap.mode;
  o.m = snap.m;
  o.gamma_edge = snap.gamma_edge;
  o.fovea_px = snap.fovea_px;

  TickRecord rec;
  rec.frame_id = next_id_++;
  rec.gaze_seq_at_start = snap.gaze_seq;
  rec.mode = snap.mode;
  RenderedFrame out;
  out.frame_id = rec.frame_id;
  out.result = pipeline_.render(snap.camera, [&] {
    if (between_passes_) between_passes_();
    const auto [gaze, seq] = state_.latest_gaze();
    rec.gaze_seq_used = seq;
    rec.gaze_used = gaze;
    return gaze;
  });
  out.message = encode_frame(out.result.display, out.frame_id);
  state_.record_frame(out.frame_id, out.result.timings);
  log_.push_back(rec);
  return out;
}

struct FrameServer::Impl {
  using Message = std::shared_ptr<const std::vector<std::uint8_t>>;

  FrameRenderer& renderer;
  ServeOptions options;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  net::steady_timer timer{ioc};
  std::unique_ptr<websocket::stream<beast::tcp_stream>> ws;
  beast::flat_buffer buffer;
  std::deque<std::pair<bool, Message>> outbox; // (binary, bytes)
  bool writing = false;
  bool closing = false;
  unsigned short bound_port = 0;

  std::thread worker;
  std::mutex mutex;
  std::condition_variable cv;
  int pending = 0;
  bool quit = false;

  Impl(FrameRenderer& r, ServeOptions o) : renderer(r), options(std::move(o)) {
    const tcp::endpoint ep(net::ip::make_address(options.address), options.port);
    acceptor.open(ep.protocol());
    acceptor.set_option(net::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen(1);
    bound_port = acceptor.local_endpoint().port();
  }

  void run() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return shutdown();
      beast::error_code ignored;
      acceptor.close(ignored);
      ws = std::make_unique<websocket::stream<beast::tcp_stream>>(std::move(socket));
      ws->async_accept([this](beast::error_code ec2) {
        if (ec2) return shutdown();
        worker = std::thread([this] { render_loop(); });
        read();
        if (options.tick_hz > 0.0) schedule_tick();
      });
    });
    ioc.run();
    {
      std::lock_guard lock(mutex);
      quit = true;
    }
    cv.notify_all();
    if (worker.joinable()) worker.join();
  }

  void shutdown() {
    if (closing) return;
    closing = true;
    timer.cancel();
    beast::error_code ignored;
    acceptor.close(ignored);
    if (ws) beast::get_lowest_layer(*ws).socket().close(ignored);
    ioc.stop();
  }

  void read() {
    ws->async_read(buffer, [this](beast::error_code ec, std::size_t) {
      if (ec) return shutdown();
      if (ws->got_text()) {
        const std::string text = beast::buffers_to_string(buffer.data());
        buffer.consume(buffer.size());
        const ControlResult r = handle_control(renderer.state(), text);
        send(false, r.reply.dump());
        if (r.request_frame) request_frame();
      } else {
        buffer.consume(buffer.size());
        send(false, nlohmann::json{{"type", "Error"}, {"payload", {{"message", "control messages must be text"}}}}.dump());
      }
      read();
    });
  }

  void schedule_tick() {
    timer.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / options.tick_hz)));
    timer.async_wait([this](beast::error_code ec) {
      if (ec || closing) return;
      {
        std::lock_guard lock(mutex);
        if (pending == 0) ++pending; // drop ticks while a frame is still queued
      }
      cv.notify_one();
      schedule_tick();
    });
  }

  void request_frame() {
    {
      std::lock_guard lock(mutex);
      ++pending;
    }
    cv.notify_one();
  }

  void render_loop() {
    for (;;) {
      {
        std::unique_lock lock(mutex);
        cv.wait(lock, [this] { return quit || pending > 0; });
        if (quit) return;
        --pending;
      }
      RenderedFrame frame = renderer.tick();
      auto msg = std::make_shared<const std::vector<std::uint8_t>>(std::move(frame.message));
      net::post(ioc, [this, msg] { send(true, msg); });
    }
  }

  void send(bool binary, const std::string& text) {
    send(binary, std::make_shared<const std::vector<std::uint8_t>>(text.begin(), text.end()));
  }

  void send(bool binary, Message msg) {
    if (closing) return;
    outbox.emplace_back(binary, std::move(msg));
    if (!writing) write_next();
  }

  void write_next() {
    writing = true;
    const auto& [binary, msg] = outbox.front();
    ws->binary(binary);
    ws->async_write(net::buffer(*msg), [this, keep = msg](beast::error_code ec, std::size_t) {
      if (ec) return shutdown();
      outbox.pop_front();
      if (outbox.empty())
        writing = false;
      else
        write_next();
    });
  }
};

FrameServer::FrameServer(FrameRenderer& renderer, ServeOptions options)
    : impl_(std::make_unique<Impl>(renderer, std::move(options))) {}

FrameServer::~FrameServer() = default;

unsigned short FrameServer::port() const noexcept { return impl_->bound_port; }

void FrameServer::run() { impl_->run(); }

void FrameServer::stop() {
  net::post(impl_->ioc, [this] { impl_->shutdown(); });
}

} // namespace fvs
