#include "softhand/presets.hpp"

#include <cstdio>
#include <cstdlib>

#ifndef SOFTHAND_DEFAULT_CONFIG_DIR
#define SOFTHAND_DEFAULT_CONFIG_DIR "config"
#endif

namespace softhand {

namespace {

dynamics::Geometry parse_geometry(const config::KeyValueFile& file, const config::Section& s) {
  dynamics::Geometry g;
  g.lengths << file.get_double(s, "l0"), file.get_double(s, "l1"), file.get_double(s, "l2"), file.get_double(s, "l3");
  for (int j = 0; j < 3; ++j) {
    const auto key = "limits" + std::to_string(j + 1);
    const auto limits = file.get_doubles(s, key, 2);
    g.lower(j) = limits[0];
    g.upper(j) = limits[1];
  }
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    file.fail(s.line, "[" + s.name + "]: " + e.what());
  }
  return g;
}

Eigen::Vector3d vec3(const config::KeyValueFile& file, const config::Section& s, std::string_view key,
                     const Eigen::Vector3d& fallback) {
  if (s.find(key) == nullptr) return fallback;
  const auto v = file.get_doubles(s, key, 3);
  return {v[0], v[1], v[2]};
}

// Applies keys present in `s` on top of `base`.
dynamics::FingerParams overlay(const config::KeyValueFile& file, const config::Section& s,
                               dynamics::FingerParams base) {
  base.tendon.flexor_arms = vec3(file, s, "flexor_arms", base.tendon.flexor_arms);
  base.tendon.extensor_arms = vec3(file, s, "extensor_arms", base.tendon.extensor_arms);
  base.tendon.spool_radius = file.get_double(s, "spool_radius", base.tendon.spool_radius);
  base.skin.stiffness = vec3(file, s, "stiffness", base.skin.stiffness);
  base.skin.damping = vec3(file, s, "damping", base.skin.damping);
  base.motor.rate_limit = file.get_double(s, "motor_rate", base.motor.rate_limit);
  base.motor.travel = file.get_double(s, "motor_travel", base.motor.travel);
  base.sensor.resolution_bits = static_cast<int>(file.get_int(s, "sensor_bits", base.sensor.resolution_bits));
  if (const auto* e = s.find("noise_steps")) base.sensor.noise_std = file.to_double(*e) * base.sensor.step();
  base.sensor.latency_samples = static_cast<int>(file.get_int(s, "latency_samples", base.sensor.latency_samples));
  return base;
}

}  // namespace

PresetLibrary PresetLibrary::parse(const config::KeyValueFile& file) {
  PresetLibrary lib;
  for (const auto* s : file.sections_with_prefix("geometry.")) {
    lib.geometries_[s->name.substr(9)] = parse_geometry(file, *s);
  }
  if (lib.geometries_.empty()) file.fail(0, "no [geometry.<name>] sections");

  dynamics::FingerParams shared;
  if (const auto* s = file.section("finger")) shared = overlay(file, *s, shared);

  for (const auto& [name, geom] : lib.geometries_) {
    dynamics::FingerParams p = shared;
    if (const auto* s = file.section("finger." + name)) p = overlay(file, *s, p);
    p.geometry = geom;
    try {
      p.validate();
    } catch (const std::invalid_argument& e) {
      const auto* s = file.section("finger." + name);
      file.fail(s != nullptr ? s->line : 0, "finger '" + name + "': " + e.what());
    }
    lib.params_[name] = p;
  }
  return lib;
}

PresetLibrary PresetLibrary::load(const std::filesystem::path& path) {
  return parse(config::KeyValueFile::load(path));
}

const dynamics::Geometry& PresetLibrary::geometry(const std::string& name) const {
  const auto it = geometries_.find(name);
  if (it == geometries_.end()) throw std::out_of_range("unknown geometry preset '" + name + "'");
  return it->second;
}

dynamics::FingerParams PresetLibrary::params_for(const std::string& geometry) const {
  const auto it = params_.find(geometry);
  if (it == params_.end()) throw std::out_of_range("unknown geometry preset '" + geometry + "'");
  return it->second;
}

std::string PresetLibrary::find_by_hash(std::uint64_t hash) const {
  for (const auto& [name, geom] : geometries_)
    if (geometry_hash(geom) == hash) return name;
  return {};
}

std::uint64_t geometry_hash(const dynamics::Geometry& geom) {
  char buf[64];
  std::string text;
  for (int i = 0; i < 4; ++i) {
    std::snprintf(buf, sizeof buf, "%.9g;", geom.lengths(i));
    text += buf;
  }
  for (int i = 0; i < 3; ++i) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g;", geom.lower(i), geom.upper(i));
    text += buf;
  }
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::filesystem::path default_config_dir() {
  if (const char* root = std::getenv("SOFTHAND_CONFIG_ROOT"); root != nullptr && *root != '\0') return root;
  return SOFTHAND_DEFAULT_CONFIG_DIR;
}

}  // namespace softhand
