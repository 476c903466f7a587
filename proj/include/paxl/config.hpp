#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "paxl/backbone.hpp"
#include "paxl/optim.hpp"
#include "paxl/patcher.hpp"
#include "paxl/world.hpp"

namespace paxl {

// Line-oriented `key = value` configuration with `[section]` headers.
// Unknown keys are rejected before anything runs; every key has a default,
// so an empty file is a valid config. The canonical serialization (sorted,
// defaults filled in) is what gets fingerprinted and echoed per run.
class ConfigMap {
 public:
  ConfigMap();

  static ConfigMap from_file(const std::filesystem::path& path);
  static ConfigMap from_text(const std::string& text);

  // Applies one `section.key=value` override (last one wins).
  void set(const std::string& dotted_key, const std::string& value);
  void apply_override(const std::string& assignment);  // "k=v" form

  const std::string& get(const std::string& dotted_key) const;

  std::string serialize() const;
  std::string fingerprint() const;  // 16 hex chars of FNV-1a over serialize()

 private:
  std::map<std::string, std::string> values_;
};

// Typed view of a validated config with derived seeds resolved.
struct RunConfig {
  std::uint64_t seed = 42;

  WorldConfig world;  // world.seed resolved
  DatasetCounts counts;
  bool export_frames = false;

  BackboneConfig backbone;  // backbone.seed resolved

  std::size_t patcher_latents = 8;
  std::size_t patcher_heads = 1;

  std::set<std::string> objectives;  // subset of {vtc, vac, atm}
  PatcherVariant variant = PatcherVariant::kPerceiver;
  std::string mode = "none";  // none | fuse | finetune | sidetune
  long long epochs = -1;      // -1: command default (3 patching, 2 downstream)
  std::size_t batch_size = 32;
  std::uint64_t train_seed = 0;
  double temperature = 0.05;

  std::string optim_preset = "desk";
  AdamWConfig optim;
  std::string gate_preset = "desk";

  std::string eval_model = "backbone";  // backbone | patcher | fuser | sidetune
  std::string eval_checkpoint;

  std::string fingerprint;

  // Command defaults when train.epochs is "auto". Patching needs ~20 passes
  // at desk scale: the antonym/reversal margins ride on an epsilon-scale text
  // component, and the order-reading attention circuit forms late.
  std::size_t patching_epochs() const { return epochs >= 0 ? epochs : 20; }
  std::size_t downstream_epochs() const { return epochs >= 0 ? epochs : 2; }
};

RunConfig resolve_config(const ConfigMap& map);

}  // namespace paxl
