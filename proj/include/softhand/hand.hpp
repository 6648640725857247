// Hand morphologies and grasp presets.

#pragma once

#include "softhand/config.hpp"
#include "softhand/dynamics.hpp"
#include "softhand/presets.hpp"
#include "softhand/protocol.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace softhand {

enum class Role { thumb, index, middle, ring, little, generic };

const char* role_name(Role r);
std::optional<Role> parse_role(std::string_view text);
protocol::FingerKind kind_for(Role r);
Role role_for(protocol::FingerKind k);

/// Planar placement of a finger root in the hand frame.
struct MountPose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  dynamics::Point apply(const dynamics::Point& p) const;
};

struct FingerEntry {
  std::uint8_t finger_id = 0;
  Role role = Role::generic;
  MountPose mount;
  std::string preset;
};

/// Which finger modules make up a hand and where they sit.
///
///   name = human5
///   [finger.1]
///   role = index
///   mount = 0.02 0.09 1.5708     # x y yaw
///   preset = index
struct HandConfiguration {
  std::string name;
  std::vector<FingerEntry> fingers;
  std::string source_text;  ///< verbatim file contents, kept for session headers

  static HandConfiguration parse(const config::KeyValueFile& file, const PresetLibrary& presets);
  static HandConfiguration load(const std::filesystem::path& path, const PresetLibrary& presets);

  /// Throws std::invalid_argument: no entries, duplicate ids, a named role
  /// used twice, or an unknown preset.
  void validate(const PresetLibrary& presets) const;
  const FingerEntry* find(std::uint8_t finger_id) const;
  const FingerEntry* find(Role role) const;
};

/// A named grasp: per-role joint targets and phase timing.
///
///   [grasp.tip_pinch]
///   panel = e
///   preshape = 0.4      # s, fingers move to preshape_fraction of the target
///   close = 0.8         # s, fingers move to the full target
///   hold = 0.4          # s, then the pose is judged
///   thumb = 0.72 0.6 0.3
///   index = 1.08 0.9 0.5
struct GraspSpec {
  std::string name;
  std::string panel;
  std::string description;
  std::map<Role, dynamics::Angles> targets;
  double preshape = 0.0;
  double close = 0.0;
  double hold = 0.0;
  double preshape_fraction = 0.5;
  double tolerance = 0.05;  ///< rad per joint

  std::vector<Role> required_roles() const;
  double budget() const { return preshape + close + hold; }
};

class GraspLibrary {
 public:
  static GraspLibrary parse(const config::KeyValueFile& file);
  static GraspLibrary load(const std::filesystem::path& path);

  bool has(const std::string& name) const { return grasps_.count(name) != 0; }
  const GraspSpec& get(const std::string& name) const;
  /// Names in file order.
  const std::vector<std::string>& names() const { return order_; }

 private:
  std::map<std::string, GraspSpec> grasps_;
  std::vector<std::string> order_;
};

}  // namespace softhand
