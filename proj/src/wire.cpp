#include "cuffbench/wire.hpp"

#include <charconv>

#include "cuffbench/errors.hpp"

namespace cuffbench {

std::string encode_frame(const Json& message) {
  const std::string body = message.dump();
  if (body.size() > kMaxFrameBytes) throw ProtocolError("frame exceeds " + std::to_string(kMaxFrameBytes) + " bytes");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xFF));
  out.push_back(static_cast<char>((n >> 16) & 0xFF));
  out.push_back(static_cast<char>((n >> 8) & 0xFF));
  out.push_back(static_cast<char>(n & 0xFF));
  out += body;
  return out;
}

void FrameDecoder::feed(std::string_view bytes) {
  buffer_.append(bytes);
  std::size_t pos = 0;
  while (buffer_.size() - pos >= 4) {
    const auto* p = reinterpret_cast<const unsigned char*>(buffer_.data() + pos);
    const std::uint32_t n = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                            (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
    if (n > kMaxFrameBytes) throw ProtocolError("frame announces " + std::to_string(n) + " bytes");
    if (buffer_.size() - pos - 4 < n) break;
    Json j;
    try {
      j = Json::parse(buffer_.begin() + static_cast<std::ptrdiff_t>(pos + 4),
                      buffer_.begin() + static_cast<std::ptrdiff_t>(pos + 4 + n));
    } catch (const Json::parse_error& e) {
      buffer_.erase(0, pos + 4 + n);
      throw ParseError("frame payload is not JSON", "byte " + std::to_string(e.byte > 0 ? e.byte - 1 : 0));
    }
    pos += 4 + n;
    if (!j.is_object()) {
      buffer_.erase(0, pos);
      throw ParseError("frame payload is not a JSON object", "byte 0");
    }
    ready_.push_back(std::move(j));
  }
  buffer_.erase(0, pos);
}

std::optional<Json> FrameDecoder::next() {
  if (ready_.empty()) return std::nullopt;
  Json j = std::move(ready_.front());
  ready_.pop_front();
  return j;
}

Json error_message(const std::string& message, const std::string& command) {
  Json j{{"kind", "error"}, {"message", message}};
  if (!command.empty()) j["command"] = command;
  return j;
}

std::optional<Json> apply_command(Session& session, const Json& command) {
  if (!command.is_object() || !command.contains("command") || !command["command"].is_string()) {
    return error_message("message has no \"command\" string");
  }
  const std::string name = command["command"].get<std::string>();
  try {
    if (name == "configure") {
      if (!command.contains("config") || !command["config"].is_string()) {
        return error_message("configure needs a \"config\" name", name);
      }
      const StimConfig config = StimConfig::from_name(command["config"].get<std::string>());
      const RampSpec ramp = command.contains("ramp") ? ramp_spec_from_json(command["ramp"]) : RampSpec{};
      const PulseSpec pulse = command.contains("pulse") ? pulse_spec_from_json(command["pulse"]) : PulseSpec{};
      session.configure(config, ramp, pulse);
    } else if (name == "run_step") {
      session.run_step();
    } else if (name == "run_to_saturation") {
      session.run_to_saturation();
    } else if (name == "abort") {
      session.abort(command.value("reason", "aborted"));
    } else if (name == "mark_saturated") {
      session.mark_saturated();
    } else {
      return error_message("unknown command '" + name + "'", name);
    }
  } catch (const Json::exception& e) {
    return error_message(std::string("malformed command: ") + e.what(), name);
  } catch (const std::exception& e) {
    return error_message(e.what(), name);
  }
  return std::nullopt;
}

BindAddress parse_bind_address(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw DomainError("bind address must be HOST:PORT, got '" + std::string(text) + "'");
  }
  BindAddress out;
  out.host = std::string(text.substr(0, colon));
  if (out.host.size() > 2 && out.host.front() == '[' && out.host.back() == ']') {
    out.host = out.host.substr(1, out.host.size() - 2);
  }
  const auto port = text.substr(colon + 1);
  unsigned value = 0;
  const auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (port.empty() || ec != std::errc{} || ptr != port.data() + port.size() || value > 65535) {
    throw DomainError("bad port in bind address '" + std::string(text) + "'");
  }
  out.port = static_cast<std::uint16_t>(value);
  return out;
}

}  // namespace cuffbench
