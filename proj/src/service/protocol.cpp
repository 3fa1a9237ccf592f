// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/service/protocol.hpp"

#include "fvs/error.hpp"
#include "fvs/harness/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace fvs {
namespace {

void put_u32(std::uint8_t* dst, std::uint32_t v) {
  static_assert(std::endian::native == std::endian::little);
  std::memcpy(dst, &v, 4);
}

std::uint32_t get_u32(const std::uint8_t* src) {
  std::uint32_t v;
  std::memcpy(&v, src, 4);
  return v;
}

nlohmann::json error_reply(const std::string& message) {
  return {{"type", "Error"}, {"payload", {{"message", message}}}};
}

nlohmann::json ack(const std::string& of) { return {{"type", "Ack"}, {"payload", {{"of", of}}}}; }

CameraView parse_camera(const nlohmann::json& p, const CameraView& current) {
  CameraView c = current;
  const auto& pose = p.at("pose");
  const auto r = pose.at("rotation").get<std::vector<float>>();
  const auto t = pose.at("translation").get<std::vector<float>>();
  if (r.size() != 9 || t.size() != 3) throw ContractViolation("rotation needs 9 and translation 3 values");
  for (int k = 0; k < 9; ++k) c.pose.rotation(k / 3, k % 3) = r[k];
  c.pose.translation = {t[0], t[1], t[2]};
  if (p.contains("intrinsics")) {
    const auto& k = p.at("intrinsics");
    c.intrinsics = {k.at("fx").get<float>(), k.at("fy").get<float>(), k.at("cx").get<float>(), k.at("cy").get<float>()};
  }
  c.width = p.value("width", c.width);
  c.height = p.value("height", c.height);
  c.validate();
  return c;
}

} // namespace

std::vector<std::uint8_t> encode_frame(const Image& image, std::uint32_t frame_id) {
  if (image.channels != 1 && image.channels != 3 && image.channels != 4) throw ShapeError("frame needs 1, 3 or 4 channels");
  const auto q = quantize_8bit(image);
  std::vector<std::uint8_t> out(kFrameHeaderSize + image.pixel_count() * 4);
  std::memcpy(out.data(), kFrameMagic, 4);
  put_u32(out.data() + 4, static_cast<std::uint32_t>(image.width));
  put_u32(out.data() + 8, static_cast<std::uint32_t>(image.height));
  put_u32(out.data() + 12, frame_id);
  std::uint8_t* px = out.data() + kFrameHeaderSize;
  const int ch = image.channels;
  for (std::size_t i = 0; i < image.pixel_count(); ++i, px += 4) {
    const std::uint8_t* s = q.data() + i * ch;
    px[0] = s[0];
    px[1] = ch == 1 ? s[0] : s[1];
    px[2] = ch == 1 ? s[0] : s[2];
    px[3] = ch == 4 ? s[3] : 255;
  }
  return out;
}

DecodedFrame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderSize || std::memcmp(bytes.data(), kFrameMagic, 4) != 0)
    throw ParseError("frame lacks the FVSF header");
  DecodedFrame f;
  f.width = get_u32(bytes.data() + 4);
  f.height = get_u32(bytes.data() + 8);
  f.frame_id = get_u32(bytes.data() + 12);
  const std::uint64_t expected = static_cast<std::uint64_t>(f.width) * f.height * 4;
  if (bytes.size() - kFrameHeaderSize != expected) throw ParseError("frame payload size disagrees with its header");
  f.rgba.assign(bytes.begin() + kFrameHeaderSize, bytes.end());
  return f;
}

SessionState::SessionState(const CameraView& camera, float fovea_px) {
  camera.validate();
  state_.camera = camera;
  state_.gaze = {0.5f * camera.width, 0.5f * camera.height};
  state_.fovea_px = fovea_px;
}

SessionSnapshot SessionState::snapshot() const {
  std::lock_guard lock(mutex_);
  return state_;
}

std::pair<Eigen::Vector2f, std::uint64_t> SessionState::latest_gaze() const {
  std::lock_guard lock(mutex_);
  return {state_.gaze, state_.gaze_seq};
}

void SessionState::set_camera(const CameraView& camera) {
  camera.validate();
  std::lock_guard lock(mutex_);
  state_.camera = camera;
  state_.gaze.x() = std::clamp(state_.gaze.x(), 0.0f, static_cast<float>(camera.width));
  state_.gaze.y() = std::clamp(state_.gaze.y(), 0.0f, static_cast<float>(camera.height));
}

void SessionState::set_gaze(float u, float v) {
  if (!std::isfinite(u) || !std::isfinite(v)) throw ContractViolation("gaze must be finite");
  std::lock_guard lock(mutex_);
  state_.gaze = {std::clamp(u, 0.0f, static_cast<float>(state_.camera.width)),
                 std::clamp(v, 0.0f, static_cast<float>(state_.camera.height))};
  ++state_.gaze_seq;
}

void SessionState::set_mode(RenderMode mode) {
  std::lock_guard lock(mutex_);
  state_.mode = mode;
}

void SessionState::set_param(const std::string& name, double value) {
  if (!std::isfinite(value)) throw ContractViolation("parameter value must be finite");
  std::lock_guard lock(mutex_);
  if (name == "m") {
    if (value < 0.0 || value >= 1.0) throw ContractViolation("m must lie in [0, 1)");
    state_.m = value;
  } else if (name == "gamma_edge") {
    if (value < 0.0) throw ContractViolation("gamma_edge must be non-negative");
    state_.gamma_edge = value;
  } else if (name == "fovea_px") {
    if (value < 1.0) throw ContractViolation("fovea_px must be at least 1");
    state_.fovea_px = static_cast<float>(value);
  } else {
    throw ContractViolation("unknown parameter '" + name + "'");
  }
}

void SessionState::record_frame(std::uint32_t frame_id, const StageTimings& timings) {
  std::lock_guard lock(mutex_);
  last_frame_id_ = frame_id;
  last_timings_ = timings;
}

std::pair<std::uint32_t, StageTimings> SessionState::last_frame() const {
  std::lock_guard lock(mutex_);
  return {last_frame_id_, last_timings_};
}

nlohmann::json stats_message(std::uint32_t frame_id, const StageTimings& t) {
  return {{"type", "Stats"},
          {"payload",
           {{"frame_id", frame_id},
            {"periphery_ms", t.periphery_ms},
            {"fovea_points_ms", t.fovea_points_ms},
            {"resolver_ms", t.resolver_ms},
            {"combine_ms", t.combine_ms},
            {"tonemap_ms", t.tonemap_ms},
            {"total_ms", t.total_ms()}}}};
}

ControlResult handle_control(SessionState& state, const std::string& text) {
  ControlResult out;
  try {
    const nlohmann::json msg = nlohmann::json::parse(text);
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
      return {error_reply("message must be an object with a string 'type'"), false};
    const std::string type = msg["type"];
    const nlohmann::json payload = msg.value("payload", nlohmann::json::object());
    if (type == "SetCamera") {
      state.set_camera(parse_camera(payload, state.snapshot().camera));
    } else if (type == "SetGaze") {
      state.set_gaze(payload.at("u").get<float>(), payload.at("v").get<float>());
    } else if (type == "SetMode") {
      state.set_mode(parse_render_mode(payload.at("mode").get<std::string>()));
    } else if (type == "SetParam") {
      state.set_param(payload.at("name").get<std::string>(), payload.at("value").get<double>());
    } else if (type == "RequestFrame") {
      out.request_frame = true;
    } else if (type == "Stats") {
      const auto [id, timings] = state.last_frame();
      out.reply = stats_message(id, timings);
      return out;
    } else {
      return {error_reply("unknown message type '" + type + "'"), false};
    }
    out.reply = ack(type);
  } catch (const nlohmann::json::exception& e) {
    return {error_reply(std::string("malformed message: ") + e.what()), false};
  } catch (const std::logic_error& e) {
    return {error_reply(e.what()), false};
  }
  return out;
}

} // namespace fvs
