// Session record files: every frame the coordinator saw or sent, verbatim,
// with its arrival time. Layout in docs/session_format.md.

#pragma once

#include "softhand/clock.hpp"
#include "softhand/protocol.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace softhand::session {

inline constexpr char kMagic[4] = {'H', 'F', 'S', 'R'};
inline constexpr std::uint16_t kFormatVersion = 1;

enum class Direction : std::uint8_t {
  node_to_coordinator = 0,
  coordinator_to_node = 1,
  coordinator_event = 2,  ///< produced by the coordinator itself, e.g. TOUCH_EVENT
};

const char* direction_name(Direction d);

struct Header {
  std::uint16_t format_version = kFormatVersion;
  std::uint8_t protocol_version = protocol::kVersion;
  std::uint64_t start_us = 0;
  std::string config;  ///< free-form text snapshot of the run configuration
};

struct Record {
  std::uint64_t arrival_us = 0;
  Direction direction = Direction::node_to_coordinator;
  std::vector<std::uint8_t> frame;

  bool operator==(const Record&) const = default;
};

struct Session {
  Header header;
  std::vector<Record> records;
};

class SessionError : public std::runtime_error {
 public:
  /// frame_index is -1 for header problems.
  SessionError(long long frame_index, const std::string& message);
  long long frame_index() const { return frame_index_; }

 private:
  long long frame_index_;
};

/// Appends records to a stream. Arrival times must not decrease.
class Writer {
 public:
  Writer(std::ostream& out, const Header& header);

  void append(std::uint64_t arrival_us, Direction direction, std::span<const std::uint8_t> frame);
  std::size_t records() const { return records_; }

 private:
  std::ostream& out_;
  std::uint64_t last_arrival_ = 0;
  std::size_t records_ = 0;
};

std::vector<std::uint8_t> encode_header(const Header& header);

/// Parses a whole record. Every frame must pass its CRC; the first one that
/// does not raises SessionError carrying its index.
Session read(std::istream& in);
Session read_file(const std::filesystem::path& path);

/// Re-emits the records on `clock`, spacing them by their original arrival
/// gaps divided by `speed`. Returns the clock time spent.
std::int64_t replay(const Session& session, double speed, Clock& clock,
                    const std::function<void(const Record&, const protocol::Frame&)>& sink);

}  // namespace softhand::session
