#pragma once

#include "softhand/config.hpp"
#include "softhand/dynamics.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace softhand {

/// Named finger geometries plus the shared tendon/skin/motor/sensor constants.
class PresetLibrary {
 public:
  static PresetLibrary parse(const config::KeyValueFile& file);
  static PresetLibrary load(const std::filesystem::path& path);

  bool has(const std::string& geometry) const { return geometries_.count(geometry) != 0; }
  const dynamics::Geometry& geometry(const std::string& name) const;
  const std::map<std::string, dynamics::Geometry>& geometries() const { return geometries_; }

  /// Full parameter set for a finger built on the named geometry.
  dynamics::FingerParams params_for(const std::string& geometry) const;

  /// Name of the preset whose hash matches, or empty.
  std::string find_by_hash(std::uint64_t hash) const;

 private:
  std::map<std::string, dynamics::Geometry> geometries_;
  std::map<std::string, dynamics::FingerParams> params_;
};

/// FNV-1a over the canonical text of the lengths and limits.
std::uint64_t geometry_hash(const dynamics::Geometry& geom);

/// Directory holding the shipped config files: $SOFTHAND_CONFIG_ROOT when set,
/// otherwise the build-time default.
std::filesystem::path default_config_dir();

}  // namespace softhand
