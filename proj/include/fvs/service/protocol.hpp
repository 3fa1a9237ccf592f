// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fvs/harness/pipeline.hpp"
#include "fvs/image.hpp"

#include <json.hpp>

#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace fvs {

inline constexpr char kFrameMagic[4] = {'F', 'V', 'S', 'F'};
inline constexpr std::size_t kFrameHeaderSize = 16;

/// "FVSF", u32 width, u32 height, u32 frame_id (little-endian), then
/// row-major RGBA8. Grey and RGB inputs are expanded with alpha 255.
std::vector<std::uint8_t> encode_frame(const Image& image, std::uint32_t frame_id);

struct DecodedFrame {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t frame_id = 0;
  std::vector<std::uint8_t> rgba;
};

/// Throws ParseError on a bad magic or a payload of the wrong size.
DecodedFrame decode_frame(std::span<const std::uint8_t> bytes);

struct SessionSnapshot {
  CameraView camera;
  Eigen::Vector2f gaze = Eigen::Vector2f::Zero();
  std::uint64_t gaze_seq = 0; // bumped on every SetGaze
  RenderMode mode = RenderMode::Foveated;
  double m = kBlendStart;
  double gamma_edge = kEdgeGamma;
  float fovea_px = 256.0f;
};

/// Mutex-guarded session state shared by the network side and the renderer.
class SessionState {
public:
  explicit SessionState(const CameraView& camera, float fovea_px = 256.0f);

  SessionSnapshot snapshot() const;
  /// Newest gaze and its sequence number.
  std::pair<Eigen::Vector2f, std::uint64_t> latest_gaze() const;

  void set_camera(const CameraView& camera);
  /// Clamped into the current image.
  void set_gaze(float u, float v);
  void set_mode(RenderMode mode);
  /// name in {m, gamma_edge, fovea_px}; throws ContractViolation otherwise
  /// or when the value is out of range.
  void set_param(const std::string& name, double value);

  void record_frame(std::uint32_t frame_id, const StageTimings& timings);
  std::pair<std::uint32_t, StageTimings> last_frame() const;

private:
  mutable std::mutex mutex_;
  SessionSnapshot state_;
  std::uint32_t last_frame_id_ = 0;
  StageTimings last_timings_;
};

struct ControlResult {
  nlohmann::json reply;
  bool request_frame = false;
};

/// Applies one JSON control message {type, payload}. Malformed input yields
/// an Error reply; the session is left unchanged.
///   SetCamera {pose: {rotation[9], translation[3]}, intrinsics: {fx, fy, cx, cy}, width?, height?}
///   SetGaze {u, v}   SetMode {mode}   SetParam {name, value}
///   RequestFrame {}  Stats {}
ControlResult handle_control(SessionState& state, const std::string& text);

nlohmann::json stats_message(std::uint32_t frame_id, const StageTimings& timings);

} // namespace fvs
