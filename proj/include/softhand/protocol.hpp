// Binary framing between the coordinator and finger nodes.
//
// Every frame, little-endian throughout:
//
//   offset  size  field
//   0       2     magic 0x48 0x46 ("HF")
//   2       1     version (1)
//   3       1     msg_type
//   4       1     finger_id
//   5       4     seq
//   9       8     timestamp_us
//   17      2     payload_len (<= 1024)
//   19      n     payload
//   19+n    4     CRC-32 (IEEE) over bytes [0, 19+n)
//
// docs/wire_protocol.md lists the payload of each message type.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace softhand::protocol {

inline constexpr std::uint8_t kMagic0 = 0x48;
inline constexpr std::uint8_t kMagic1 = 0x46;
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 19;
inline constexpr std::size_t kCrcSize = 4;
inline constexpr std::size_t kMinFrameSize = kHeaderSize + kCrcSize;
inline constexpr std::size_t kMaxPayload = 1024;
inline constexpr std::size_t kMaxFrameSize = kMinFrameSize + kMaxPayload;
/// floor(2 pi * 1e6): angle payloads stay within +-2 pi.
inline constexpr std::int32_t kMaxAngleMicrorad = 6283185;

enum class MsgType : std::uint8_t {
  hello = 0x01,
  pose_telemetry = 0x02,
  motor_telemetry = 0x03,
  set_motor_targets = 0x04,
  set_joint_targets = 0x05,
  touch_event = 0x06,
  heartbeat = 0x07,
  error = 0x08,
};

enum class FingerKind : std::uint8_t { generic = 0, thumb = 1, index = 2, middle = 3, ring = 4, little = 5 };

struct Hello {
  FingerKind kind = FingerKind::generic;
  std::uint64_t geometry_hash = 0;
  bool operator==(const Hello&) const = default;
};

struct PoseTelemetry {
  std::array<std::int32_t, 3> angles_urad{};  ///< theta1, theta2, theta3
  bool operator==(const PoseTelemetry&) const = default;
};

struct MotorTelemetry {
  std::array<std::int32_t, 2> spool_urad{};  ///< flexor, extensor
  bool operator==(const MotorTelemetry&) const = default;
};

struct SetMotorTargets {
  std::array<std::int32_t, 2> targets_urad{};  ///< flexor, extensor
  std::uint32_t rate_limit_urad_s = 0;
  bool operator==(const SetMotorTargets&) const = default;
};

struct SetJointTargets {
  std::array<std::int32_t, 3> targets_urad{};
  bool operator==(const SetJointTargets&) const = default;
};

struct TouchEvent {
  std::uint32_t magnitude_urad = 0;
  std::uint8_t joint = 0;  ///< 0..2
  bool operator==(const TouchEvent&) const = default;
};

struct Heartbeat {
  bool operator==(const Heartbeat&) const = default;
};

struct Error {
  std::uint16_t code = 0;
  std::string text;  ///< UTF-8
  bool operator==(const Error&) const = default;
};

using Message =
    std::variant<Hello, PoseTelemetry, MotorTelemetry, SetMotorTargets, SetJointTargets, TouchEvent, Heartbeat, Error>;

MsgType type_of(const Message& m);
const char* type_name(MsgType t);

/// Error codes carried in ERROR messages.
namespace error_code {
inline constexpr std::uint16_t malformed_frame = 1;
inline constexpr std::uint16_t wrong_finger = 2;
inline constexpr std::uint16_t duplicate_finger = 3;
inline constexpr std::uint16_t unexpected_message = 4;
inline constexpr std::uint16_t not_registered = 5;
inline constexpr std::uint16_t infeasible_command = 6;
}  // namespace error_code

struct Header {
  std::uint8_t version = kVersion;
  MsgType type = MsgType::heartbeat;
  std::uint8_t finger_id = 0;
  std::uint32_t seq = 0;
  std::uint64_t timestamp_us = 0;
  bool operator==(const Header&) const = default;
};

struct Frame {
  Header header;
  Message message;
  bool operator==(const Frame&) const = default;
};

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws EncodeError for payloads above kMaxPayload or out-of-range fields.
std::vector<std::uint8_t> encode(const Message& msg, std::uint8_t finger_id, std::uint32_t seq,
                                 std::uint64_t timestamp_us);

enum class DecodeStatus {
  ok,
  incomplete,          ///< `needed` more bytes required
  bad_magic,           ///< `consumed` garbage bytes skipped up to the next magic
  crc_mismatch,        ///< `offset` is the position of the CRC field
  unsupported_version,
  unknown_type,        ///< `raw` holds the whole frame
  malformed_payload,
  oversize_payload,    ///< declared payload_len above kMaxPayload
};

const char* status_name(DecodeStatus s);

struct DecodeResult {
  DecodeStatus status = DecodeStatus::incomplete;
  std::optional<Frame> frame;
  std::size_t consumed = 0;  ///< bytes the caller should drop before decoding again
  std::size_t needed = 0;
  std::size_t offset = 0;
  /// The frame bytes verbatim, whenever the CRC verified.
  std::vector<std::uint8_t> raw;
  std::string detail;

  bool ok() const { return status == DecodeStatus::ok; }
};

/// Decodes the first frame of a byte stream. Leading bytes that do not start a
/// frame are reported as bad_magic and skipped. Total on all inputs.
DecodeResult decode(std::span<const std::uint8_t> bytes);

/// Decodes a buffer that must hold exactly one frame. The CRC is verified
/// before any field is interpreted, so every single-bit corruption is reported
/// as crc_mismatch.
DecodeResult decode_frame(std::span<const std::uint8_t> bytes);

/// Incremental decoder for one connection. Buffers at most one frame.
class StreamDecoder {
 public:
  void feed(std::span<const std::uint8_t> bytes);

  /// Next decoded frame or error; nullopt when more bytes are needed.
  std::optional<DecodeResult> next();

  /// End of input: whatever is buffered can no longer complete, so rescan it as
  /// garbage and return everything still recoverable.
  std::vector<DecodeResult> finish();

  std::size_t buffered() const { return buffer_.size(); }
  std::size_t frames() const { return frames_; }
  std::size_t errors() const { return errors_; }
  std::size_t skipped_bytes() const { return skipped_; }

 private:
  std::deque<std::uint8_t> buffer_;
  std::vector<std::uint8_t> scratch_;
  std::size_t frames_ = 0;
  std::size_t errors_ = 0;
  std::size_t skipped_ = 0;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Rounds to the nearest microradian. Throws std::out_of_range beyond +-2 pi.
std::int32_t to_microradians(double radians);
inline double from_microradians(std::int32_t urad) { return static_cast<double>(urad) * 1e-6; }

std::string to_hex(std::span<const std::uint8_t> bytes);
/// Parses whitespace-separated hex byte pairs; '#' starts a comment.
std::vector<std::uint8_t> from_hex(const std::string& text);

/// One-line human readable rendering, used by protocol-dump.
std::string describe(const Frame& frame);

}  // namespace softhand::protocol
