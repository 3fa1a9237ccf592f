// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fvs/harness/pipeline.hpp"
#include "fvs/service/protocol.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace fvs {

struct TickRecord {
  std::uint32_t frame_id = 0;
  std::uint64_t gaze_seq_at_start = 0; // gaze sequence when the tick began
  std::uint64_t gaze_seq_used = 0;     // sequence latched for the foveal pass
  Eigen::Vector2f gaze_used = Eigen::Vector2f::Zero();
  RenderMode mode = RenderMode::Foveated;
};

struct RenderedFrame {
  std::uint32_t frame_id = 0;
  std::vector<std::uint8_t> message; // encoded binary frame
  FrameResult result;
};

/// Renders ticks from a SessionState: camera, mode and parameters are taken
/// from a snapshot at tick start, the gaze is re-read after the peripheral
/// pass. Not thread-safe itself; one renderer thread per session.
class FrameRenderer {
public:
  FrameRenderer(const GaussianSet& gaussians, const NeuralPointCloud& points, std::optional<ResolverWeights> weights,
                PipelineOptions options, SessionState& state);

  RenderedFrame tick();

  const std::vector<TickRecord>& tick_log() const noexcept { return log_; }
  /// Test hook run between the peripheral pass and the gaze latch.
  void set_between_passes(std::function<void()> hook) { between_passes_ = std::move(hook); }
  SessionState& state() noexcept { return state_; }

private:
  Pipeline pipeline_;
  SessionState& state_;
  std::uint32_t next_id_ = 1;
  std::vector<TickRecord> log_;
  std::function<void()> between_passes_;
};

struct ServeOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 0; // 0 picks a free port
  double tick_hz = 0.0;    // > 0 streams frames; 0 renders on RequestFrame only
};

/// WebSocket server for a single client. Control messages are JSON text,
/// frames are binary. Network I/O runs on one thread, rendering on another.
class FrameServer {
public:
  FrameServer(FrameRenderer& renderer, ServeOptions options);
  ~FrameServer();
  FrameServer(const FrameServer&) = delete;
  FrameServer& operator=(const FrameServer&) = delete;

  /// Bound port (valid after construction).
  unsigned short port() const noexcept;
  /// Accepts one client and serves it until it disconnects or stop() is called.
  void run();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace fvs
