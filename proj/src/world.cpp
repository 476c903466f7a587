#include "paxl/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace paxl {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kAnchorJitter = 0.15;      // uniform half-width around the anchor
constexpr double kRampSpan = 1.0;           // directional ramp covers [-0.5, 0.5] * span
constexpr double kOscAmplitude = 0.35;
constexpr std::size_t kMaxInstancesPerPair = 4096;

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kEval: return "eval";
    case Split::kHeldoutDomain: return "heldout_domain";
  }
  return "?";
}

void WorldConfig::validate() const {
  if (num_objects < 1) throw ConfigError("world.num_objects must be positive");
  if (frames_per_clip < 2 || frames_per_clip % 2 != 0)
    throw ConfigError("world.frames_per_clip must be even and at least 2");
  if (patches_per_frame < 1) throw ConfigError("world.patches_per_frame must be positive");
  if (noise_std < 0) throw ConfigError("world.noise_std must be non-negative");
}

std::string object_token(int object_id) {
  std::ostringstream os;
  os << "obj" << (object_id < 10 ? "0" : "") << object_id;
  return os.str();
}

World::World(WorldConfig config, ActionLexicon lexicon)
    : config_(config), lexicon_(std::move(lexicon)) {
  config_.validate();
}

ClipInstance World::generate_clip(int object_id, int action_id, std::uint64_t instance_seed,
                                  Split split) const {
  if (object_id < 0 || object_id >= static_cast<int>(config_.num_objects))
    throw IndexError("generate_clip: unknown object id " + std::to_string(object_id));
  const ActionEntry& act = lexicon_.entry(action_id);

  const std::size_t n = config_.frames_per_clip;
  const std::size_t m = config_.state_dim();
  // Streams key on the pair base id: antonym members at the same instance
  // seed share jitter and noise, which makes the antonym trajectory exactly
  // the time reversal of the original on noise-free worlds.
  SplitRng rng = SplitRng(config_.seed)
                     .split("clip")
                     .split(static_cast<std::uint64_t>(object_id))
                     .split(static_cast<std::uint64_t>(lexicon_.base_class(action_id)))
                     .split(instance_seed);

  std::array<double, kPoseDim> center{};
  for (std::size_t c = 0; c < kPoseDim; ++c)
    center[c] = act.anchor[c] + (rng.next_uniform() * 2.0 - 1.0) * kAnchorJitter;

  // Oscillation profile is mirrored index-wise so a symmetric clip equals its
  // own reversal bit-for-bit, independent of libm rounding.
  std::vector<double> osc(n, 0.0);
  if (act.kind == ActionKind::kSymmetric) {
    for (std::size_t i = 0; i < n / 2; ++i) {
      const double phase = 2.0 * kPi * act.oscillation_periods *
                           (static_cast<double>(i) - (static_cast<double>(n) - 1.0) / 2.0) /
                           static_cast<double>(n);
      osc[i] = kOscAmplitude * std::cos(phase);
      osc[n - 1 - i] = osc[i];
    }
  }

  ClipInstance clip;
  clip.object_id = object_id;
  clip.action_id = action_id;
  clip.num_frames = n;
  clip.state_dim = m;
  clip.instance_seed = instance_seed;
  clip.split = split;
  clip.salient_gt = act.kind == ActionKind::kDirectional;
  clip.annotation = {object_token(object_id), act.name};
  clip.template_annotation = {"something", act.name};
  clip.frames.assign(n * m, 0.0);

  for (std::size_t f = 0; f < n; ++f) {
    double* frame = clip.frames.data() + f * m;
    frame[object_id] = 1.0;  // exact one-hot; noise applies to pose only
    double* pose = frame + config_.num_objects;
    switch (act.kind) {
      case ActionKind::kDirectional: {
        const double ramp =
            (static_cast<double>(f) / (static_cast<double>(n) - 1.0) - 0.5) * kRampSpan;
        for (std::size_t c = 0; c < kPoseDim; ++c)
          pose[c] = center[c] + ramp * act.direction[c];
        break;
      }
      case ActionKind::kSymmetric:
        for (std::size_t c = 0; c < kPoseDim; ++c)
          pose[c] = center[c] + osc[f] * act.direction[c];
        break;
      case ActionKind::kStatic:
        for (std::size_t c = 0; c < kPoseDim; ++c) pose[c] = center[c];
        break;
    }
  }
  if (config_.noise_std > 0) {
    for (std::size_t f = 0; f < n; ++f) {
      double* pose = clip.frames.data() + f * m + config_.num_objects;
      for (std::size_t c = 0; c < kPoseDim; ++c)
        pose[c] += rng.next_gaussian(config_.noise_std);
    }
  }
  return clip;
}

ClipInstance reverse_clip(const ClipInstance& clip) {
  ClipInstance out = clip;
  out.reversed = !clip.reversed;
  const std::size_t n = clip.num_frames, m = clip.state_dim;
  for (std::size_t f = 0; f < n; ++f)
    std::copy(clip.frames.begin() + (n - 1 - f) * m, clip.frames.begin() + (n - f) * m,
              out.frames.begin() + f * m);
  return out;
}

std::vector<std::string> make_antonym_annotation(const ActionLexicon& lexicon,
                                                 const ClipInstance& clip) {
  const auto ant = lexicon.antonym_of(clip.action_id);
  if (!ant)
    throw NotApplicableError("make_antonym_annotation: action '" +
                             lexicon.entry(clip.action_id).name + "' has no antonym");
  auto tokens = clip.annotation;
  tokens.back() = lexicon.entry(*ant).name;
  return tokens;
}

std::vector<std::string> object_replace(const WorldConfig& config, const ClipInstance& clip,
                                        SplitRng& rng) {
  if (config.num_objects < 2)
    throw ConfigError("object_replace: needs at least two objects");
  // Sample uniformly among the other objects; replacement != original.
  auto pick = static_cast<int>(rng.next_below(config.num_objects - 1));
  if (pick >= clip.object_id) ++pick;
  auto tokens = clip.annotation;
  tokens.front() = object_token(pick);
  return tokens;
}

namespace {

std::string make_clip_id(Split split, std::size_t index) {
  const char* prefix = split == Split::kTrain ? "tr" : split == Split::kEval ? "ev" : "ho";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%06zu", prefix, index);
  return buf;
}

std::vector<ClipInstance> build_split(const World& world, Split split,
                                      const std::vector<int>& actions, std::size_t count,
                                      std::uint64_t seed_base) {
  const auto& cfg = world.config();
  const std::size_t pairs = cfg.num_objects * actions.size();
  if (count > pairs * kMaxInstancesPerPair)
    throw ConfigError("build_dataset: split count " + std::to_string(count) +
                      " exceeds stratification capacity " +
                      std::to_string(pairs * kMaxInstancesPerPair));
  std::vector<ClipInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    // Actions cycle fastest so every prefix stays balanced over actions.
    const int action = actions[i % actions.size()];
    const int object = static_cast<int>((i / actions.size()) % cfg.num_objects);
    ClipInstance clip = world.generate_clip(object, action, seed_base + i, split);
    clip.clip_id = make_clip_id(split, i);
    out.push_back(std::move(clip));
  }
  return out;
}

}  // namespace

Dataset build_dataset(const World& world, const DatasetCounts& counts) {
  const auto train_actions = default_train_actions();
  const auto heldout_actions = default_heldout_actions();

  Dataset ds;
  ds.config = world.config();
  ds.train = build_split(world, Split::kTrain, train_actions, counts.train, 0);
  ds.eval = build_split(world, Split::kEval, train_actions, counts.eval, 1u << 20);
  ds.heldout =
      build_split(world, Split::kHeldoutDomain, heldout_actions, counts.heldout, 1u << 21);

  SplitRng objswap_rng = SplitRng(world.config().seed).split("objswap");
  ds.eval_probes.reserve(ds.eval.size());
  for (std::size_t i = 0; i < ds.eval.size(); ++i) {
    const ClipInstance& clip = ds.eval[i];
    EvalProbes probes;
    if (world.lexicon().antonym_of(clip.action_id)) {
      probes.antonym_annotation = make_antonym_annotation(world.lexicon(), clip);
      probes.reversed = reverse_clip(clip);
    }
    SplitRng r = objswap_rng.split(i);
    probes.objswap_annotation = object_replace(world.config(), clip, r);
    ds.eval_probes.push_back(std::move(probes));
  }
  return ds;
}

namespace {

void manifest_rows(const World& world, const std::vector<ClipInstance>& clips,
                   std::ostringstream& os) {
  for (const auto& c : clips) {
    const auto& act = world.lexicon().entry(c.action_id);
    os << c.clip_id << '\t' << c.object_id << '\t' << c.action_id << '\t' << act.name << '\t'
       << to_string(act.kind) << '\t' << to_string(c.split) << '\t'
       << world.config().frames_per_clip << '\t' << (c.salient_gt ? 1 : 0) << '\t'
       << c.instance_seed << '\n';
  }
}

}  // namespace

std::string write_manifest(const World& world, const Dataset& dataset) {
  std::ostringstream os;
  os << "clip_id\tobject_id\taction_id\taction_name\tkind\tsplit\tnum_frames\tsalient_gt\t"
        "seed\n";
  manifest_rows(world, dataset.train, os);
  manifest_rows(world, dataset.eval, os);
  manifest_rows(world, dataset.heldout, os);
  return os.str();
}

std::vector<ManifestRow> parse_manifest(const std::string& tsv) {
  std::vector<ManifestRow> rows;
  std::istringstream is(tsv);
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestRow r;
    std::string field;
    std::getline(ls, r.clip_id, '\t');
    std::getline(ls, field, '\t');
    r.object_id = std::stoi(field);
    std::getline(ls, field, '\t');
    r.action_id = std::stoi(field);
    std::getline(ls, r.action_name, '\t');
    std::getline(ls, r.kind, '\t');
    std::getline(ls, r.split, '\t');
    std::getline(ls, field, '\t');
    r.num_frames = static_cast<std::size_t>(std::stoul(field));
    std::getline(ls, field, '\t');
    r.salient_gt = field == "1";
    std::getline(ls, field, '\t');
    r.seed = std::stoull(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

FrameStore export_frames(const Dataset& dataset) {
  FrameStore store;
  std::ostringstream table;
  table << "clip_id\toffset\tnum_values\n";
  auto dump = [&](const std::vector<ClipInstance>& clips) {
    for (const auto& c : clips) {
      table << c.clip_id << '\t' << store.blob.size() << '\t' << c.frames.size() << '\n';
      const auto* bytes = reinterpret_cast<const char*>(c.frames.data());
      store.blob.append(bytes, c.frames.size() * sizeof(double));
    }
  };
  dump(dataset.train);
  dump(dataset.eval);
  dump(dataset.heldout);
  store.offset_table_tsv = table.str();
  return store;
}

}  // namespace paxl
