#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "paxl/lexicon.hpp"
#include "paxl/rng.hpp"

namespace paxl {

enum class Split { kTrain, kEval, kHeldoutDomain };

std::string to_string(Split s);

struct WorldConfig {
  std::size_t num_objects = 24;
  std::size_t frames_per_clip = 8;  // must be >= 2 and even
  std::size_t patches_per_frame = 9;
  double noise_std = 0.02;
  std::uint64_t seed = 0;

  // Frame state layout: object one-hot block followed by the continuous pose
  // block. A strict one-hot needs num_objects slots, so the state dimension
  // is derived rather than configured independently.
  std::size_t state_dim() const { return num_objects + kPoseDim; }

  void validate() const;
};

// One synthetic video: an ordered sequence of frame-state vectors plus its
// annotation and transform metadata.
struct ClipInstance {
  std::string clip_id;
  int object_id = 0;
  int action_id = 0;
  std::size_t num_frames = 0;
  std::size_t state_dim = 0;
  // num_frames x state_dim, row-major.
  std::vector<double> frames;
  std::vector<std::string> annotation;           // {object token, action token}
  std::vector<std::string> template_annotation;  // {"something", action token}
  bool reversed = false;
  Split split = Split::kTrain;
  bool salient_gt = false;  // true iff the action kind is directional
  std::uint64_t instance_seed = 0;

  const double* frame(std::size_t f) const { return frames.data() + f * state_dim; }
};

std::string object_token(int object_id);

// Procedural generator over a config + lexicon; all outputs are pure
// functions of (config, ids, instance seed).
class World {
 public:
  World(WorldConfig config, ActionLexicon lexicon);

  const WorldConfig& config() const { return config_; }
  const ActionLexicon& lexicon() const { return lexicon_; }

  ClipInstance generate_clip(int object_id, int action_id, std::uint64_t instance_seed,
                             Split split = Split::kTrain) const;

 private:
  WorldConfig config_;
  ActionLexicon lexicon_;
};

// Frames in reverse order, reversed flag toggled, metadata untouched.
ClipInstance reverse_clip(const ClipInstance& clip);

// Annotation with only the action token replaced by its antonym.
std::vector<std::string> make_antonym_annotation(const ActionLexicon& lexicon,
                                                 const ClipInstance& clip);

// Annotation with the object token replaced by a uniformly sampled different
// object token; the action token is untouched.
std::vector<std::string> object_replace(const WorldConfig& config, const ClipInstance& clip,
                                        SplitRng& rng);

// Probes precomputed for one eval clip. Antonym/reversal probes exist only
// for directional actions.
struct EvalProbes {
  std::optional<std::vector<std::string>> antonym_annotation;
  std::optional<ClipInstance> reversed;
  std::vector<std::string> objswap_annotation;
};

struct DatasetCounts {
  std::size_t train = 2400;
  std::size_t eval = 600;
  std::size_t heldout = 300;
};

struct Dataset {
  WorldConfig config;
  std::vector<ClipInstance> train;
  std::vector<ClipInstance> eval;
  std::vector<ClipInstance> heldout;
  std::vector<EvalProbes> eval_probes;  // aligned with eval
};

// Stratified, deterministic dataset construction. Train/eval draw from the
// train action set, the heldout split from the disjoint heldout action set.
Dataset build_dataset(const World& world, const DatasetCounts& counts);

// Tab-separated manifest with the fixed column set; regenerating from the
// same (config, seed) reproduces it byte-for-byte.
std::string write_manifest(const World& world, const Dataset& dataset);

struct ManifestRow {
  std::string clip_id;
  int object_id;
  int action_id;
  std::string action_name;
  std::string kind;
  std::string split;
  std::size_t num_frames;
  bool salient_gt;
  std::uint64_t seed;
};

std::vector<ManifestRow> parse_manifest(const std::string& tsv);

// Optional binary frame store: per-clip block of frames as little-endian
// doubles plus a TSV offset table keyed by clip_id.
struct FrameStore {
  std::string blob;
  std::string offset_table_tsv;
};

FrameStore export_frames(const Dataset& dataset);

}  // namespace paxl
