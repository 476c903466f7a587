#pragma once

#include <memory>
#include <string>
#include <vector>

#include "paxl/config.hpp"
#include "paxl/fuser.hpp"
#include "paxl/objectives.hpp"
#include "paxl/patcher.hpp"

namespace paxl {

// Shared frozen artifacts for one config: world, backbone, gate thresholds,
// dataset, saliency. Built once and reused across training and evaluation.
struct Pipeline {
  RunConfig config;
  World world;
  FrozenBackbone backbone;
  GateThresholds thresholds;
  Dataset dataset;
  SaliencyTable saliency;
};

Pipeline build_pipeline(const RunConfig& config);

struct StepLoss {
  std::size_t step;
  double vtc, vac, atm;
  std::size_t atm_gated_count;
  double total;
};

struct RunRecord {
  std::string config_fingerprint;
  std::vector<StepLoss> loss_log;
  double wall_seconds = 0.0;

  // TSV: step, vtc, vac, atm, atm_gated_count, total.
  std::string loss_log_tsv() const;
};

// Frozen per-clip training inputs, encoded once up front.
struct EncodedClip {
  TensorPtr tokens;          // P x D
  TensorPtr reversed_tokens; // present when the clip is gated
  TensorPtr text;            // d, normalized
  TensorPtr antonym_text;    // present for directional clips
  TensorPtr pooled;          // d, normalized backbone pooled visual
  bool gated = false;
};

std::vector<EncodedClip> encode_for_training(const Pipeline& pipe,
                                             const std::vector<ClipInstance>& clips);

// Trainable model bundle; exactly one patcher variant is populated, and the
// fuser/side-tuner only in the matching downstream mode.
struct ModelBundle {
  PatcherVariant variant = PatcherVariant::kPerceiver;
  std::unique_ptr<PerceiverPatcher> perceiver;
  std::unique_ptr<TransformerPatcher> transformer;
  std::unique_ptr<Fuser> fuser;
  std::unique_ptr<SideTuner> sidetuner;

  TensorPtr patch(const TensorPtr& tokens) const;
  SimilarityHead head() const;  // max-token (perceiver) or mean-pooled (transformer)
  std::vector<TensorPtr> trainable() const;
  NamedTensors checkpoint_tensors(const Pipeline& pipe) const;  // with metadata + backbone
};

ModelBundle init_patcher_bundle(const Pipeline& pipe, std::uint64_t seed);
// Reconstructs a bundle from checkpoint tensors: variant from the metadata,
// downstream heads attached when their tensors are present.
ModelBundle load_bundle(const Pipeline& pipe, const NamedTensors& ckpt);
// Loads patcher tensors from a checkpoint and attaches downstream heads per
// mode ("fuse" adds a fuser, "sidetune" a side-tuner, "finetune" nothing).
ModelBundle init_downstream_bundle(const Pipeline& pipe, const NamedTensors& patcher_ckpt,
                                   const std::string& mode, std::uint64_t seed);

struct TrainResult {
  NamedTensors checkpoint;
  RunRecord record;
};

// Seed-deterministic patching run over the train split with the configured
// objective set. Aborts with the step index on a non-finite loss.
TrainResult train_patcher(const Pipeline& pipe, ModelBundle& model);

// Downstream run (fuse / finetune / sidetune), VTC on full annotations.
TrainResult train_downstream(const Pipeline& pipe, ModelBundle& model);

}  // namespace paxl
