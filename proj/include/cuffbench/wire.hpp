#pragma once

// Session wire protocol: each frame is a 4-byte big-endian payload length
// followed by one UTF-8 JSON object.
//
// Client commands carry "command": configure | run_step | run_to_saturation
// | abort | mark_saturated | subscribe. Server messages carry "kind":
// snapshot | transition | step_result | error | gap.

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "cuffbench/session.hpp"

namespace cuffbench {

inline constexpr std::size_t kMaxFrameBytes = 16u << 20;

std::string encode_frame(const Json& message);

/// Incremental frame reassembly over an arbitrary split of the byte stream.
class FrameDecoder {
 public:
  /// Throws ProtocolError when a frame announces more than kMaxFrameBytes,
  /// ParseError when a complete payload is not a JSON object. After a
  /// ParseError the bad frame is gone; feed({}) resumes with the rest.
  void feed(std::string_view bytes);
  std::optional<Json> next();
  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::string buffer_;
  std::deque<Json> ready_;
};

Json error_message(const std::string& message, const std::string& command = "");

/// Executes one command synchronously. Returns an error message for the
/// caller when the command is malformed or illegal, nullopt otherwise
/// (state changes reach subscribers as transition/step_result messages).
/// "subscribe" is transport-level and is rejected here.
std::optional<Json> apply_command(Session& session, const Json& command);

struct BindAddress {
  std::string host;
  std::uint16_t port = 0;
};

/// "HOST:PORT" with PORT in 0..65535. Throws DomainError.
BindAddress parse_bind_address(std::string_view text);

}  // namespace cuffbench
