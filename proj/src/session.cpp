#include "softhand/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace softhand::session {

namespace {

void put(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

bool read_exact(std::istream& in, std::uint8_t* dst, std::size_t n) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n;
}

constexpr std::size_t kFixedHeader = 4 + 2 + 1 + 1 + 8 + 4;
constexpr std::size_t kRecordPrefix = 8 + 1;

}  // namespace

const char* direction_name(Direction d) {
  switch (d) {
    case Direction::node_to_coordinator: return "rx";
    case Direction::coordinator_to_node: return "tx";
    case Direction::coordinator_event: return "event";
  }
  return "?";
}

SessionError::SessionError(long long frame_index, const std::string& message)
    : std::runtime_error(frame_index < 0 ? "session header: " + message
                                         : "session frame " + std::to_string(frame_index) + ": " + message),
      frame_index_(frame_index) {}

std::vector<std::uint8_t> encode_header(const Header& header) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put(out, header.format_version, 2);
  out.push_back(header.protocol_version);
  out.push_back(0);
  put(out, header.start_us, 8);
  put(out, header.config.size(), 4);
  out.insert(out.end(), header.config.begin(), header.config.end());
  return out;
}

Writer::Writer(std::ostream& out, const Header& header) : out_(out), last_arrival_(header.start_us) {
  const auto bytes = encode_header(header);
  out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void Writer::append(std::uint64_t arrival_us, Direction direction, std::span<const std::uint8_t> frame) {
  if (arrival_us < last_arrival_) throw std::invalid_argument("session arrival times must not decrease");
  last_arrival_ = arrival_us;
  std::vector<std::uint8_t> out;
  out.reserve(4 + kRecordPrefix + frame.size());
  put(out, kRecordPrefix + frame.size(), 4);
  put(out, arrival_us, 8);
  out.push_back(static_cast<std::uint8_t>(direction));
  out.insert(out.end(), frame.begin(), frame.end());
  out_.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  ++records_;
}

Session read(std::istream& in) {
  Session s;
  std::uint8_t fixed[kFixedHeader];
  if (!read_exact(in, fixed, kFixedHeader)) throw SessionError(-1, "file too short for a header");
  if (std::memcmp(fixed, kMagic, 4) != 0) throw SessionError(-1, "not a session record (bad magic)");
  s.header.format_version = static_cast<std::uint16_t>(get(fixed + 4, 2));
  s.header.protocol_version = fixed[6];
  s.header.start_us = get(fixed + 8, 8);
  if (s.header.format_version != kFormatVersion)
    throw SessionError(-1, "unsupported format version " + std::to_string(s.header.format_version));
  if (s.header.protocol_version != protocol::kVersion)
    throw SessionError(-1, "recorded with protocol version " + std::to_string(s.header.protocol_version));
  const std::size_t config_len = get(fixed + 16, 4);
  s.header.config.resize(config_len);
  if (!read_exact(in, reinterpret_cast<std::uint8_t*>(s.header.config.data()), config_len))
    throw SessionError(-1, "truncated configuration snapshot");

  std::uint64_t last = s.header.start_us;
  for (long long index = 0;; ++index) {
    std::uint8_t len_bytes[4];
    in.read(reinterpret_cast<char*>(len_bytes), 4);
    if (in.gcount() == 0) break;
    if (in.gcount() != 4) throw SessionError(index, "truncated record length");
    const std::size_t len = get(len_bytes, 4);
    if (len < kRecordPrefix + protocol::kMinFrameSize || len > kRecordPrefix + protocol::kMaxFrameSize)
      throw SessionError(index, "record length " + std::to_string(len) + " out of range");
    std::vector<std::uint8_t> body(len);
    if (!read_exact(in, body.data(), len)) throw SessionError(index, "truncated record");
    Record r;
    r.arrival_us = get(body.data(), 8);
    if (body[8] > 2) throw SessionError(index, "unknown direction " + std::to_string(body[8]));
    r.direction = static_cast<Direction>(body[8]);
    r.frame.assign(body.begin() + kRecordPrefix, body.end());
    if (r.arrival_us < last) throw SessionError(index, "arrival time goes backwards");
    last = r.arrival_us;
    const auto decoded = protocol::decode_frame(r.frame);
    if (!decoded.ok()) throw SessionError(index, std::string(protocol::status_name(decoded.status)) + " " + decoded.detail);
    s.records.push_back(std::move(r));
  }
  return s;
}

Session read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SessionError(-1, "cannot open " + path.string());
  return read(in);
}

std::int64_t replay(const Session& session, double speed, Clock& clock,
                    const std::function<void(const Record&, const protocol::Frame&)>& sink) {
  if (!(speed > 0.0) || !std::isfinite(speed)) throw std::invalid_argument("replay speed must be positive");
  const std::int64_t t0 = clock.now_us();
  if (session.records.empty()) return 0;
  const std::uint64_t first = session.records.front().arrival_us;
  for (const auto& r : session.records) {
    const double offset = double(r.arrival_us - first) / speed;
    clock.sleep_until(t0 + std::llround(offset));
    const auto decoded = protocol::decode_frame(r.frame);
    if (decoded.ok()) sink(r, *decoded.frame);
  }
  return clock.now_us() - t0;
}

}  // namespace softhand::session
