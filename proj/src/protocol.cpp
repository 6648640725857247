#include "softhand/protocol.hpp"

#include <boost/crc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace softhand::protocol {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_i32(std::vector<std::uint8_t>& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[at + i];
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[at + i];
  return v;
}

std::int32_t get_i32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::int32_t>(get_u32(b, at));
}

bool angle_ok(std::int32_t v) { return v >= -kMaxAngleMicrorad && v <= kMaxAngleMicrorad; }

bool valid_utf8(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong forms, surrogates and values past U+10FFFF.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) || cp > 0x10FFFF ||
        (cp >= 0xD800 && cp <= 0xDFFF))
      return false;
    i += len;
  }
  return true;
}

struct PayloadWriter {
  std::vector<std::uint8_t>& out;

  void operator()(const Hello& m) {
    out.push_back(static_cast<std::uint8_t>(m.kind));
    put_u64(out, m.geometry_hash);
  }
  void operator()(const PoseTelemetry& m) {
    for (auto v : m.angles_urad) put_i32(out, v);
  }
  void operator()(const MotorTelemetry& m) {
    for (auto v : m.spool_urad) put_i32(out, v);
  }
  void operator()(const SetMotorTargets& m) {
    for (auto v : m.targets_urad) put_i32(out, v);
    put_u32(out, m.rate_limit_urad_s);
  }
  void operator()(const SetJointTargets& m) {
    for (auto v : m.targets_urad) put_i32(out, v);
  }
  void operator()(const TouchEvent& m) {
    put_u32(out, m.magnitude_urad);
    out.push_back(m.joint);
  }
  void operator()(const Heartbeat&) {}
  void operator()(const Error& m) {
    put_u16(out, m.code);
    out.insert(out.end(), m.text.begin(), m.text.end());
  }
};

void validate_for_encode(const Message& msg) {
  auto angles = [](auto const& arr) {
    for (auto v : arr)
      if (!angle_ok(v)) throw EncodeError("angle payload outside +-2 pi microradians");
  };
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Hello>) {
          if (static_cast<std::uint8_t>(m.kind) > 5) throw EncodeError("unknown finger kind");
        } else if constexpr (std::is_same_v<T, PoseTelemetry>) {
          angles(m.angles_urad);
        } else if constexpr (std::is_same_v<T, MotorTelemetry>) {
          angles(m.spool_urad);
        } else if constexpr (std::is_same_v<T, SetMotorTargets>) {
          angles(m.targets_urad);
        } else if constexpr (std::is_same_v<T, SetJointTargets>) {
          angles(m.targets_urad);
        } else if constexpr (std::is_same_v<T, TouchEvent>) {
          if (m.magnitude_urad > static_cast<std::uint32_t>(kMaxAngleMicrorad))
            throw EncodeError("touch magnitude outside 2 pi microradians");
          if (m.joint > 2) throw EncodeError("touch joint index must be 0..2");
        } else if constexpr (std::is_same_v<T, Error>) {
          if (m.text.size() + 2 > kMaxPayload) throw EncodeError("error text exceeds the payload limit");
          if (!valid_utf8(m.text)) throw EncodeError("error text is not valid UTF-8");
        }
      },
      msg);
}

// Parses the payload of a frame whose header and CRC are already verified.
DecodeResult parse_payload(MsgType type, std::span<const std::uint8_t> p, DecodeResult r) {
  auto malformed = [&](const std::string& why) {
    r.status = DecodeStatus::malformed_payload;
    r.detail = std::string(type_name(type)) + ": " + why;
    return r;
  };
  auto need = [&](std::size_t n) { return p.size() == n; };

  Message msg;
  switch (type) {
    case MsgType::hello: {
      if (!need(9)) return malformed("payload must be 9 bytes");
      if (p[0] > 5) return malformed("unknown finger kind");
      msg = Hello{static_cast<FingerKind>(p[0]), get_u64(p, 1)};
      break;
    }
    case MsgType::pose_telemetry: {
      if (!need(12)) return malformed("payload must be 12 bytes");
      PoseTelemetry m;
      for (int i = 0; i < 3; ++i) m.angles_urad[i] = get_i32(p, 4 * i);
      for (auto v : m.angles_urad)
        if (!angle_ok(v)) return malformed("angle outside +-2 pi");
      msg = m;
      break;
    }
    case MsgType::motor_telemetry: {
      if (!need(8)) return malformed("payload must be 8 bytes");
      MotorTelemetry m;
      for (int i = 0; i < 2; ++i) m.spool_urad[i] = get_i32(p, 4 * i);
      for (auto v : m.spool_urad)
        if (!angle_ok(v)) return malformed("angle outside +-2 pi");
      msg = m;
      break;
    }
    case MsgType::set_motor_targets: {
      if (!need(12)) return malformed("payload must be 12 bytes");
      SetMotorTargets m;
      for (int i = 0; i < 2; ++i) m.targets_urad[i] = get_i32(p, 4 * i);
      m.rate_limit_urad_s = get_u32(p, 8);
      for (auto v : m.targets_urad)
        if (!angle_ok(v)) return malformed("angle outside +-2 pi");
      msg = m;
      break;
    }
    case MsgType::set_joint_targets: {
      if (!need(12)) return malformed("payload must be 12 bytes");
      SetJointTargets m;
      for (int i = 0; i < 3; ++i) m.targets_urad[i] = get_i32(p, 4 * i);
      for (auto v : m.targets_urad)
        if (!angle_ok(v)) return malformed("angle outside +-2 pi");
      msg = m;
      break;
    }
    case MsgType::touch_event: {
      if (!need(5)) return malformed("payload must be 5 bytes");
      TouchEvent m{get_u32(p, 0), p[4]};
      if (m.magnitude_urad > static_cast<std::uint32_t>(kMaxAngleMicrorad)) return malformed("magnitude outside 2 pi");
      if (m.joint > 2) return malformed("joint index must be 0..2");
      msg = m;
      break;
    }
    case MsgType::heartbeat: {
      if (!need(0)) return malformed("payload must be empty");
      msg = Heartbeat{};
      break;
    }
    case MsgType::error: {
      if (p.size() < 2) return malformed("payload must hold at least the error code");
      Error m{get_u16(p, 0), std::string(p.begin() + 2, p.end())};
      if (!valid_utf8(m.text)) return malformed("text is not valid UTF-8");
      msg = std::move(m);
      break;
    }
    default:
      return malformed("unreachable");
  }
  r.status = DecodeStatus::ok;
  r.frame->message = std::move(msg);
  return r;
}

bool known_type(std::uint8_t t) { return t >= 0x01 && t <= 0x08; }

// Header fields and payload of a frame whose length and CRC have been checked.
DecodeResult interpret(std::span<const std::uint8_t> frame) {
  DecodeResult r;
  r.consumed = frame.size();
  r.raw.assign(frame.begin(), frame.end());
  const std::uint8_t version = frame[2];
  if (version != kVersion) {
    r.status = DecodeStatus::unsupported_version;
    r.detail = "protocol version " + std::to_string(version) + " is not supported";
    return r;
  }
  if (!known_type(frame[3])) {
    r.status = DecodeStatus::unknown_type;
    r.detail = "unknown message type " + std::to_string(frame[3]);
    return r;
  }
  Header h;
  h.version = version;
  h.type = static_cast<MsgType>(frame[3]);
  h.finger_id = frame[4];
  h.seq = get_u32(frame, 5);
  h.timestamp_us = get_u64(frame, 9);
  r.frame = Frame{h, Heartbeat{}};
  const std::size_t len = get_u16(frame, 17);
  return parse_payload(h.type, frame.subspan(kHeaderSize, len), std::move(r));
}

}  // namespace

MsgType type_of(const Message& m) {
  static constexpr MsgType kTypes[] = {MsgType::hello,
                                       MsgType::pose_telemetry,
                                       MsgType::motor_telemetry,
                                       MsgType::set_motor_targets,
                                       MsgType::set_joint_targets,
                                       MsgType::touch_event,
                                       MsgType::heartbeat,
                                       MsgType::error};
  return kTypes[m.index()];
}

const char* type_name(MsgType t) {
  switch (t) {
    case MsgType::hello: return "HELLO";
    case MsgType::pose_telemetry: return "POSE_TELEMETRY";
    case MsgType::motor_telemetry: return "MOTOR_TELEMETRY";
    case MsgType::set_motor_targets: return "SET_MOTOR_TARGETS";
    case MsgType::set_joint_targets: return "SET_JOINT_TARGETS";
    case MsgType::touch_event: return "TOUCH_EVENT";
    case MsgType::heartbeat: return "HEARTBEAT";
    case MsgType::error: return "ERROR";
  }
  return "UNKNOWN";
}

const char* status_name(DecodeStatus s) {
  switch (s) {
    case DecodeStatus::ok: return "ok";
    case DecodeStatus::incomplete: return "incomplete";
    case DecodeStatus::bad_magic: return "bad_magic";
    case DecodeStatus::crc_mismatch: return "crc_mismatch";
    case DecodeStatus::unsupported_version: return "unsupported_version";
    case DecodeStatus::unknown_type: return "unknown_type";
    case DecodeStatus::malformed_payload: return "malformed_payload";
    case DecodeStatus::oversize_payload: return "oversize_payload";
  }
  return "?";
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

std::vector<std::uint8_t> encode(const Message& msg, std::uint8_t finger_id, std::uint32_t seq,
                                 std::uint64_t timestamp_us) {
  validate_for_encode(msg);
  std::vector<std::uint8_t> payload;
  std::visit(PayloadWriter{payload}, msg);
  if (payload.size() > kMaxPayload) throw EncodeError("payload exceeds 1024 bytes");

  std::vector<std::uint8_t> out;
  out.reserve(kMinFrameSize + payload.size());
  out.push_back(kMagic0);
  out.push_back(kMagic1);
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(type_of(msg)));
  out.push_back(finger_id);
  put_u32(out, seq);
  put_u64(out, timestamp_us);
  put_u16(out, static_cast<std::uint16_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  put_u32(out, crc32(out));
  return out;
}

DecodeResult decode(std::span<const std::uint8_t> bytes) {
  DecodeResult r;
  if (bytes.size() < 2) {
    if (bytes.size() == 1 && bytes[0] != kMagic0) {
      r.status = DecodeStatus::bad_magic;
      r.consumed = 1;
      return r;
    }
    r.needed = 2 - bytes.size();
    return r;
  }
  if (bytes[0] != kMagic0 || bytes[1] != kMagic1) {
    std::size_t k = 1;
    while (k + 1 < bytes.size() && !(bytes[k] == kMagic0 && bytes[k + 1] == kMagic1)) ++k;
    // A trailing 0x48 may be the first half of the next magic.
    if (k + 1 == bytes.size() && bytes[k] != kMagic0) k = bytes.size();
    r.status = DecodeStatus::bad_magic;
    r.consumed = k;
    r.detail = "skipped " + std::to_string(k) + " bytes before the next frame magic";
    return r;
  }
  if (bytes.size() < kHeaderSize) {
    r.needed = kHeaderSize - bytes.size();
    return r;
  }
  const std::size_t len = get_u16(bytes, 17);
  if (len > kMaxPayload) {
    r.status = DecodeStatus::oversize_payload;
    r.consumed = 1;
    r.detail = "declared payload of " + std::to_string(len) + " bytes exceeds the limit";
    return r;
  }
  const std::size_t total = kMinFrameSize + len;
  if (bytes.size() < total) {
    r.needed = total - bytes.size();
    return r;
  }
  const auto frame = bytes.first(total);
  if (crc32(frame.first(total - kCrcSize)) != get_u32(frame, total - kCrcSize)) {
    r.status = DecodeStatus::crc_mismatch;
    r.offset = total - kCrcSize;
    r.consumed = 1;
    r.detail = "CRC mismatch in frame of " + std::to_string(total) + " bytes";
    return r;
  }
  return interpret(frame);
}

DecodeResult decode_frame(std::span<const std::uint8_t> bytes) {
  DecodeResult r;
  r.consumed = bytes.size();
  if (bytes.size() < kMinFrameSize) {
    r.needed = kMinFrameSize - bytes.size();
    r.consumed = 0;
    return r;
  }
  const std::size_t crc_at = bytes.size() - kCrcSize;
  if (crc32(bytes.first(crc_at)) != get_u32(bytes, crc_at)) {
    r.status = DecodeStatus::crc_mismatch;
    r.offset = crc_at;
    r.detail = "CRC mismatch";
    return r;
  }
  if (bytes[0] != kMagic0 || bytes[1] != kMagic1) {
    r.status = DecodeStatus::bad_magic;
    r.detail = "frame does not start with the magic";
    return r;
  }
  const std::size_t len = get_u16(bytes, 17);
  if (len != bytes.size() - kMinFrameSize) {
    r.status = len > kMaxPayload ? DecodeStatus::oversize_payload : DecodeStatus::malformed_payload;
    r.detail = "payload_len " + std::to_string(len) + " does not match the frame size";
    return r;
  }
  if (len > kMaxPayload) {
    r.status = DecodeStatus::oversize_payload;
    r.detail = "payload exceeds 1024 bytes";
    return r;
  }
  return interpret(bytes);
}

void StreamDecoder::feed(std::span<const std::uint8_t> bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

std::optional<DecodeResult> StreamDecoder::next() {
  while (!buffer_.empty()) {
    // Only the prefix that can form one frame is needed.
    const std::size_t window = std::min(buffer_.size(), kMaxFrameSize);
    scratch_.assign(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(window));
    DecodeResult r = decode(scratch_);
    if (r.status == DecodeStatus::incomplete) return std::nullopt;
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(r.consumed));
    if (r.ok()) {
      ++frames_;
    } else {
      ++errors_;
      if (r.status == DecodeStatus::bad_magic) skipped_ += r.consumed;
    }
    return r;
  }
  return std::nullopt;
}

std::vector<DecodeResult> StreamDecoder::finish() {
  std::vector<DecodeResult> out;
  while (!buffer_.empty()) {
    if (auto r = next()) {
      out.push_back(std::move(*r));
      continue;
    }
    // Stalled on an incomplete frame that will never complete: drop one byte
    // and keep scanning.
    buffer_.pop_front();
    ++skipped_;
  }
  return out;
}

std::int32_t to_microradians(double radians) {
  if (!std::isfinite(radians)) throw std::out_of_range("angle is not finite");
  const double urad = std::round(radians * 1e6);
  if (std::abs(urad) > kMaxAngleMicrorad) throw std::out_of_range("angle outside +-2 pi");
  return static_cast<std::int32_t>(urad);
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (i != 0) s.push_back(' ');
    s.push_back(kDigits[bytes[i] >> 4]);
    s.push_back(kDigits[bytes[i] & 0xF]);
  }
  return s;
}

std::vector<std::uint8_t> from_hex(const std::string& text) {
  std::vector<std::uint8_t> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream words(line);
    std::string w;
    while (words >> w) {
      if (w.size() != 2) throw std::invalid_argument("hex byte '" + w + "' must be two digits");
      out.push_back(static_cast<std::uint8_t>(std::stoul(w, nullptr, 16)));
    }
  }
  return out;
}

std::string describe(const Frame& frame) {
  std::ostringstream s;
  const auto& h = frame.header;
  s << type_name(h.type) << " finger=" << int(h.finger_id) << " seq=" << h.seq << " t_us=" << h.timestamp_us;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Hello>) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(m.geometry_hash));
          s << " kind=" << int(m.kind) << " geometry_hash=" << buf;
        } else if constexpr (std::is_same_v<T, PoseTelemetry>) {
          s << " q_urad=" << m.angles_urad[0] << "," << m.angles_urad[1] << "," << m.angles_urad[2];
        } else if constexpr (std::is_same_v<T, MotorTelemetry>) {
          s << " spool_urad=" << m.spool_urad[0] << "," << m.spool_urad[1];
        } else if constexpr (std::is_same_v<T, SetMotorTargets>) {
          s << " targets_urad=" << m.targets_urad[0] << "," << m.targets_urad[1] << " rate_urad_s=" << m.rate_limit_urad_s;
        } else if constexpr (std::is_same_v<T, SetJointTargets>) {
          s << " targets_urad=" << m.targets_urad[0] << "," << m.targets_urad[1] << "," << m.targets_urad[2];
        } else if constexpr (std::is_same_v<T, TouchEvent>) {
          s << " magnitude_urad=" << m.magnitude_urad << " joint=" << int(m.joint);
        } else if constexpr (std::is_same_v<T, Error>) {
          s << " code=" << m.code << " text=\"" << m.text << "\"";
        }
      },
      frame.message);
  return s.str();
}

}  // namespace softhand::protocol
