#include "softhand/hand.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace softhand {

namespace {

constexpr std::pair<Role, const char*> kRoleNames[] = {
    {Role::thumb, "thumb"}, {Role::index, "index"}, {Role::middle, "middle"},
    {Role::ring, "ring"},   {Role::little, "little"}, {Role::generic, "generic"},
};

}  // namespace

const char* role_name(Role r) {
  for (const auto& [role, name] : kRoleNames)
    if (role == r) return name;
  return "generic";
}

std::optional<Role> parse_role(std::string_view text) {
  for (const auto& [role, name] : kRoleNames)
    if (text == name) return role;
  return std::nullopt;
}

protocol::FingerKind kind_for(Role r) {
  switch (r) {
    case Role::thumb: return protocol::FingerKind::thumb;
    case Role::index: return protocol::FingerKind::index;
    case Role::middle: return protocol::FingerKind::middle;
    case Role::ring: return protocol::FingerKind::ring;
    case Role::little: return protocol::FingerKind::little;
    case Role::generic: break;
  }
  return protocol::FingerKind::generic;
}

Role role_for(protocol::FingerKind k) {
  switch (k) {
    case protocol::FingerKind::thumb: return Role::thumb;
    case protocol::FingerKind::index: return Role::index;
    case protocol::FingerKind::middle: return Role::middle;
    case protocol::FingerKind::ring: return Role::ring;
    case protocol::FingerKind::little: return Role::little;
    case protocol::FingerKind::generic: break;
  }
  return Role::generic;
}

dynamics::Point MountPose::apply(const dynamics::Point& p) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {x + c * p.x() - s * p.y(), y + s * p.x() + c * p.y()};
}

HandConfiguration HandConfiguration::parse(const config::KeyValueFile& file, const PresetLibrary& presets) {
  HandConfiguration hand;
  const auto* top = file.section("");
  hand.name = top != nullptr ? file.get_string(*top, "name", "hand") : "hand";
  for (const auto* s : file.sections_with_prefix("finger.")) {
    const std::string id_text = s->name.substr(7);
    char* end = nullptr;
    const long id = std::strtol(id_text.c_str(), &end, 10);
    if (id_text.empty() || *end != '\0' || id < 0 || id > 255)
      file.fail(s->line, "finger id '" + id_text + "' must be an integer in 0..255");
    FingerEntry e;
    e.finger_id = static_cast<std::uint8_t>(id);
    const std::string role_text = file.get_string(*s, "role", "generic");
    const auto role = parse_role(role_text);
    if (!role) file.fail(s->find("role")->line, "unknown role '" + role_text + "'");
    e.role = *role;
    const auto mount = file.get_doubles(*s, "mount", 3);
    e.mount = {mount[0], mount[1], mount[2]};
    e.preset = file.get_string(*s, "preset");
    if (!presets.has(e.preset)) file.fail(s->find("preset")->line, "unknown geometry preset '" + e.preset + "'");
    for (const auto& other : hand.fingers) {
      if (other.finger_id == e.finger_id) file.fail(s->line, "finger id " + id_text + " listed twice");
      if (e.role != Role::generic && other.role == e.role)
        file.fail(s->find("role")->line, std::string("role '") + role_name(e.role) + "' assigned twice");
    }
    hand.fingers.push_back(e);
  }
  if (hand.fingers.empty()) file.fail(0, "hand configuration lists no [finger.<id>] sections");
  return hand;
}

HandConfiguration HandConfiguration::load(const std::filesystem::path& path, const PresetLibrary& presets) {
  auto hand = parse(config::KeyValueFile::load(path), presets);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  hand.source_text = buf.str();
  return hand;
}

void HandConfiguration::validate(const PresetLibrary& presets) const {
  if (fingers.empty()) throw std::invalid_argument("hand configuration has no fingers");
  std::set<int> ids;
  std::set<Role> roles;
  for (const auto& f : fingers) {
    if (!ids.insert(f.finger_id).second) throw std::invalid_argument("duplicate finger id " + std::to_string(f.finger_id));
    if (f.role != Role::generic && !roles.insert(f.role).second)
      throw std::invalid_argument(std::string("role ") + role_name(f.role) + " assigned twice");
    if (!presets.has(f.preset)) throw std::invalid_argument("unknown geometry preset " + f.preset);
  }
}

const FingerEntry* HandConfiguration::find(std::uint8_t finger_id) const {
  for (const auto& f : fingers)
    if (f.finger_id == finger_id) return &f;
  return nullptr;
}

const FingerEntry* HandConfiguration::find(Role role) const {
  for (const auto& f : fingers)
    if (f.role == role) return &f;
  return nullptr;
}

std::vector<Role> GraspSpec::required_roles() const {
  std::vector<Role> out;
  for (const auto& [role, q] : targets) out.push_back(role);
  return out;
}

GraspLibrary GraspLibrary::parse(const config::KeyValueFile& file) {
  GraspLibrary lib;
  for (const auto* s : file.sections_with_prefix("grasp.")) {
    GraspSpec g;
    g.name = s->name.substr(6);
    g.panel = file.get_string(*s, "panel", "");
    g.description = file.get_string(*s, "description", "");
    g.preshape = file.get_double(*s, "preshape", 0.0);
    g.close = file.get_double(*s, "close", 0.0);
    g.hold = file.get_double(*s, "hold", 0.0);
    g.preshape_fraction = file.get_double(*s, "preshape_fraction", g.preshape_fraction);
    g.tolerance = file.get_double(*s, "tolerance", g.tolerance);
    if (g.preshape < 0 || g.close < 0 || g.hold < 0) file.fail(s->line, "phase durations must be >= 0");
    if (!(g.close > 0)) file.fail(s->line, "close phase must be longer than 0 s");
    if (g.preshape_fraction < 0 || g.preshape_fraction > 1) file.fail(s->line, "preshape_fraction must lie in [0, 1]");
    if (!(g.tolerance > 0)) file.fail(s->line, "tolerance must be positive");
    for (const auto& e : s->entries) {
      const auto role = parse_role(e.key);
      if (!role) continue;
      if (*role == Role::generic) file.fail(e.line, "grasp targets name specific roles");
      const auto v = file.to_doubles(e);
      if (v.size() != 3) file.fail(e.line, "'" + e.key + "' expects 3 joint angles");
      g.targets[*role] = dynamics::Angles(v[0], v[1], v[2]);
    }
    static const std::set<std::string> kKnown{"panel", "description", "preshape", "close", "hold",
                                              "preshape_fraction", "tolerance"};
    for (const auto& e : s->entries)
      if (!parse_role(e.key) && kKnown.count(e.key) == 0) file.fail(e.line, "unknown key '" + e.key + "'");
    lib.order_.push_back(g.name);
    lib.grasps_.emplace(g.name, std::move(g));
  }
  return lib;
}

GraspLibrary GraspLibrary::load(const std::filesystem::path& path) { return parse(config::KeyValueFile::load(path)); }

const GraspSpec& GraspLibrary::get(const std::string& name) const {
  const auto it = grasps_.find(name);
  if (it == grasps_.end()) throw std::out_of_range("unknown grasp '" + name + "'");
  return it->second;
}

}  // namespace softhand
