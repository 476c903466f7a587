#include "paxl/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

#include "paxl/errors.hpp"
#include "paxl/hash.hpp"

namespace paxl {

namespace {

struct KeySpec {
  const char* key;
  const char* default_value;
};

// Registry of every recognized key with its default. Section order here is
// the canonical serialization order.
const std::vector<KeySpec>& key_registry() {
  static const std::vector<KeySpec> keys = {
      {"seed", "42"},
      {"world.num_objects", "24"},
      {"world.frames_per_clip", "8"},
      {"world.patches_per_frame", "9"},
      {"world.noise_std", "0.02"},
      {"world.seed", "auto"},
      {"world.train_count", "2400"},
      {"world.eval_count", "600"},
      {"world.heldout_count", "300"},
      {"world.export_frames", "false"},
      {"backbone.embed_dim", "48"},
      {"backbone.model_dim", "32"},
      {"backbone.epsilon", "0.05"},
      {"backbone.seed", "auto"},
      {"patcher.latents", "8"},
      {"patcher.heads", "2"},
      {"train.objectives", "vtc,vac,atm"},
      {"train.variant", "perceiver"},
      {"train.mode", "none"},
      {"train.epochs", "auto"},
      {"train.batch_size", "32"},
      {"train.seed", "auto"},
      {"train.temperature", "0.05"},
      {"optim.preset", "desk"},
      {"gate.preset", "desk"},
      {"eval.model", "backbone"},
      {"eval.checkpoint", ""},
  };
  return keys;
}

bool known_key(const std::string& k) {
  for (const auto& spec : key_registry())
    if (k == spec.key) return true;
  return false;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

}  // namespace

ConfigMap::ConfigMap() {
  for (const auto& spec : key_registry()) values_[spec.key] = spec.default_value;
}

ConfigMap ConfigMap::from_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open file: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

ConfigMap ConfigMap::from_text(const std::string& text) {
  ConfigMap map;
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const std::string dotted = section.empty() ? key : section + "." + key;
    map.set(dotted, value);
  }
  return map;
}

void ConfigMap::set(const std::string& dotted_key, const std::string& value) {
  if (!known_key(dotted_key)) throw ConfigError("config: unknown key '" + dotted_key + "'");
  values_[dotted_key] = value;
}

void ConfigMap::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& ConfigMap::get(const std::string& dotted_key) const {
  auto it = values_.find(dotted_key);
  if (it == values_.end()) throw ConfigError("config: unknown key '" + dotted_key + "'");
  return it->second;
}

std::string ConfigMap::serialize() const {
  // Registry order, grouped into sections.
  std::ostringstream os;
  std::string section;
  for (const auto& spec : key_registry()) {
    const std::string key = spec.key;
    const auto dotpos = key.find('.');
    const std::string sec = dotpos == std::string::npos ? "" : key.substr(0, dotpos);
    const std::string leaf = dotpos == std::string::npos ? key : key.substr(dotpos + 1);
    if (sec != section) {
      os << "[" << sec << "]\n";
      section = sec;
    }
    os << leaf << " = " << values_.at(key) << "\n";
  }
  return os.str();
}

std::string ConfigMap::fingerprint() const {
  const auto h = fnv1a64(serialize());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig resolve_config(const ConfigMap& map) {
  RunConfig rc;
  rc.seed = parse_u64("seed", map.get("seed"));

  rc.world.num_objects = parse_u64("world.num_objects", map.get("world.num_objects"));
  rc.world.frames_per_clip =
      parse_u64("world.frames_per_clip", map.get("world.frames_per_clip"));
  rc.world.patches_per_frame =
      parse_u64("world.patches_per_frame", map.get("world.patches_per_frame"));
  rc.world.noise_std = parse_double("world.noise_std", map.get("world.noise_std"));
  rc.world.seed = map.get("world.seed") == "auto"
                      ? SplitRng(rc.seed).split("world").key()
                      : parse_u64("world.seed", map.get("world.seed"));
  rc.counts.train = parse_u64("world.train_count", map.get("world.train_count"));
  rc.counts.eval = parse_u64("world.eval_count", map.get("world.eval_count"));
  rc.counts.heldout = parse_u64("world.heldout_count", map.get("world.heldout_count"));
  rc.export_frames = parse_bool("world.export_frames", map.get("world.export_frames"));
  rc.world.validate();

  rc.backbone.embed_dim = parse_u64("backbone.embed_dim", map.get("backbone.embed_dim"));
  rc.backbone.model_dim = parse_u64("backbone.model_dim", map.get("backbone.model_dim"));
  rc.backbone.epsilon = parse_double("backbone.epsilon", map.get("backbone.epsilon"));
  rc.backbone.seed = map.get("backbone.seed") == "auto"
                         ? SplitRng(rc.seed).split("backbone").key()
                         : parse_u64("backbone.seed", map.get("backbone.seed"));
  rc.backbone.validate();

  rc.patcher_latents = parse_u64("patcher.latents", map.get("patcher.latents"));
  rc.patcher_heads = parse_u64("patcher.heads", map.get("patcher.heads"));
  if (rc.patcher_heads == 0 || rc.backbone.model_dim % rc.patcher_heads != 0)
    throw ConfigError("patcher.heads must divide backbone.model_dim");

  {
    std::string objs = map.get("train.objectives");
    std::replace(objs.begin(), objs.end(), ',', ' ');
    std::istringstream is(objs);
    std::string tok;
    while (is >> tok) {
      if (tok != "vtc" && tok != "vac" && tok != "atm")
        throw ConfigError("train.objectives: unknown objective '" + tok + "'");
      rc.objectives.insert(tok);
    }
    if (!rc.objectives.count("vtc"))
      throw ConfigError("train.objectives: vtc is required (it anchors the loss)");
  }
  rc.variant = patcher_variant_from_string(map.get("train.variant"));
  rc.mode = map.get("train.mode");
  if (rc.mode != "none" && rc.mode != "fuse" && rc.mode != "finetune" && rc.mode != "sidetune")
    throw ConfigError("train.mode: expected none|fuse|finetune|sidetune, got '" + rc.mode + "'");
  rc.epochs = map.get("train.epochs") == "auto"
                  ? -1
                  : static_cast<long long>(parse_u64("train.epochs", map.get("train.epochs")));
  rc.batch_size = parse_u64("train.batch_size", map.get("train.batch_size"));
  if (rc.batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
  rc.train_seed = map.get("train.seed") == "auto"
                      ? SplitRng(rc.seed).split("train").key()
                      : parse_u64("train.seed", map.get("train.seed"));
  rc.temperature = parse_double("train.temperature", map.get("train.temperature"));
  if (rc.temperature <= 0) throw ConfigError("train.temperature must be positive");

  rc.optim_preset = map.get("optim.preset");
  rc.optim = adamw_preset(rc.optim_preset);
  rc.gate_preset = map.get("gate.preset");
  if (rc.gate_preset != "desk" && rc.gate_preset != "paper")
    throw ConfigError("gate.preset: expected desk or paper, got '" + rc.gate_preset + "'");

  rc.eval_model = map.get("eval.model");
  if (rc.eval_model != "backbone" && rc.eval_model != "patcher" && rc.eval_model != "fuser" &&
      rc.eval_model != "sidetune")
    throw ConfigError("eval.model: expected backbone|patcher|fuser|sidetune, got '" +
                      rc.eval_model + "'");
  rc.eval_checkpoint = map.get("eval.checkpoint");

  rc.fingerprint = map.fingerprint();
  return rc;
}

}  // namespace paxl
