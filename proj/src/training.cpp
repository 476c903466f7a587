#include "paxl/training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "paxl/errors.hpp"

namespace paxl {

namespace {

TensorPtr leaf_matrix(std::size_t r, std::size_t c, std::vector<double> v) {
  return Tensor::make({r, c}, std::move(v));
}

TensorPtr leaf_vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::make({n}, std::move(v));
}

std::vector<double> reverse_frame_blocks(const std::vector<double>& tokens, std::size_t frames,
                                         std::size_t block) {
  std::vector<double> out(tokens.size());
  for (std::size_t f = 0; f < frames; ++f)
    std::copy(tokens.begin() + (frames - 1 - f) * block, tokens.begin() + (frames - f) * block,
              out.begin() + f * block);
  return out;
}

void fisher_yates(std::vector<std::size_t>& order, SplitRng rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng.next_below(i);
    std::swap(order[i - 1], order[j]);
  }
}

}  // namespace

Pipeline build_pipeline(const RunConfig& config) {
  World world(config.world, default_lexicon());
  FrozenBackbone backbone(config.world, world.lexicon(), config.backbone);
  GateThresholds thresholds = config.gate_preset == "paper"
                                  ? paper_gate_thresholds()
                                  : calibrate_gate_thresholds(world, backbone);
  Dataset dataset = build_dataset(world, config.counts);
  SaliencyTable saliency = compute_saliency(backbone, dataset, thresholds);
  return Pipeline{config, std::move(world), std::move(backbone), thresholds,
                  std::move(dataset), std::move(saliency)};
}

std::string RunRecord::loss_log_tsv() const {
  std::ostringstream os;
  os.precision(17);
  os << "step\tvtc\tvac\tatm\tatm_gated_count\ttotal\n";
  for (const auto& s : loss_log)
    os << s.step << '\t' << s.vtc << '\t' << s.vac << '\t' << s.atm << '\t'
       << s.atm_gated_count << '\t' << s.total << '\n';
  return os.str();
}

std::vector<EncodedClip> encode_for_training(const Pipeline& pipe,
                                             const std::vector<ClipInstance>& clips) {
  const auto& backbone = pipe.backbone;
  const std::size_t P = backbone.token_count();
  const std::size_t D = backbone.config().embed_dim;
  const std::size_t frames = pipe.config.world.frames_per_clip;
  const std::size_t block = (P / frames) * D;

  std::vector<EncodedClip> out;
  out.reserve(clips.size());
  for (const auto& clip : clips) {
    EncodedClip ec;
    auto enc = backbone.encode_clip(clip);
    ec.pooled = leaf_vector(enc.pooled_visual);
    ec.text = leaf_vector(backbone.encode_text(clip.annotation));
    const auto it = pipe.saliency.scores.find(clip.clip_id);
    ec.gated = it != pipe.saliency.scores.end() && it->second.gated;
    if (ec.gated)
      ec.reversed_tokens =
          leaf_matrix(P, D, reverse_frame_blocks(enc.visual_tokens, frames, block));
    ec.tokens = leaf_matrix(P, D, std::move(enc.visual_tokens));
    if (pipe.world.lexicon().antonym_of(clip.action_id))
      ec.antonym_text = leaf_vector(
          backbone.encode_text(make_antonym_annotation(pipe.world.lexicon(), clip)));
    out.push_back(std::move(ec));
  }
  return out;
}

TensorPtr ModelBundle::patch(const TensorPtr& tokens) const {
  if (variant == PatcherVariant::kPerceiver) return perceiver->forward(tokens);
  return transformer->forward(tokens);
}

SimilarityHead ModelBundle::head() const {
  if (variant == PatcherVariant::kPerceiver)
    return [](const TensorPtr& v, const TensorPtr& t) { return sim_max_tokens(v, t); };
  return [](const TensorPtr& v, const TensorPtr& t) { return sim_mean_pooled(v, t); };
}

std::vector<TensorPtr> ModelBundle::trainable() const {
  std::vector<TensorPtr> out = variant == PatcherVariant::kPerceiver
                                   ? perceiver->trainable()
                                   : transformer->trainable();
  if (fuser) {
    auto f = fuser->trainable();
    out.insert(out.end(), f.begin(), f.end());
  }
  if (sidetuner) out.push_back(sidetuner->a);
  return out;
}

NamedTensors ModelBundle::checkpoint_tensors(const Pipeline& pipe) const {
  NamedTensors live = variant == PatcherVariant::kPerceiver ? perceiver->named()
                                                            : transformer->named();
  if (fuser) {
    auto f = fuser->named();
    live.insert(f.begin(), f.end());
  }
  if (sidetuner) {
    auto s = sidetuner->named();
    live.insert(s.begin(), s.end());
  }
  // Backbone parameters ride along so checkpoints are self-contained.
  auto bb = pipe.backbone.named_params();
  live.insert(bb.begin(), bb.end());
  // Snapshot: detach from the live parameters.
  NamedTensors out;
  for (const auto& [name, t] : live) out[name] = Tensor::make(t->shape, t->values);

  const auto& dims = variant == PatcherVariant::kPerceiver ? perceiver->dims
                                                           : transformer->dims;
  out["meta.variant"] =
      Tensor::scalar(variant == PatcherVariant::kPerceiver ? 0.0 : 1.0);
  out["meta.dims"] = Tensor::make(
      {4}, {static_cast<double>(dims.latents), static_cast<double>(dims.model_dim),
            static_cast<double>(dims.token_count), static_cast<double>(dims.token_dim)});
  out["meta.optim_preset"] = Tensor::scalar(pipe.config.optim_preset == "desk" ? 0.0 : 1.0);
  return out;
}

namespace {

PatcherDims make_dims(const Pipeline& pipe) {
  PatcherDims dims;
  dims.latents = pipe.config.patcher_latents;
  dims.token_dim = pipe.config.backbone.embed_dim;
  dims.model_dim = pipe.config.backbone.model_dim;
  dims.token_count = pipe.backbone.token_count();
  dims.frames = pipe.config.world.frames_per_clip;
  dims.heads = pipe.config.patcher_heads;
  return dims;
}

}  // namespace

ModelBundle init_patcher_bundle(const Pipeline& pipe, std::uint64_t seed) {
  ModelBundle m;
  m.variant = pipe.config.variant;
  const auto dims = make_dims(pipe);
  SplitRng rng = SplitRng(seed).split("patcher-init");
  if (m.variant == PatcherVariant::kPerceiver)
    m.perceiver = std::make_unique<PerceiverPatcher>(PerceiverPatcher::init(dims, rng));
  else
    m.transformer = std::make_unique<TransformerPatcher>(TransformerPatcher::init(dims, rng));
  return m;
}

ModelBundle init_downstream_bundle(const Pipeline& pipe, const NamedTensors& patcher_ckpt,
                                   const std::string& mode, std::uint64_t seed) {
  ModelBundle m = init_patcher_bundle(pipe, seed);
  if (m.variant == PatcherVariant::kPerceiver)
    m.perceiver->load(patcher_ckpt);
  else
    m.transformer->load(patcher_ckpt);
  if (mode == "fuse") {
    m.fuser = std::make_unique<Fuser>(
        Fuser::init(pipe.config.backbone.model_dim, SplitRng(seed).split("fuser-init")));
  } else if (mode == "sidetune") {
    m.sidetuner = std::make_unique<SideTuner>(SideTuner::init());
  } else if (mode != "finetune") {
    throw ConfigError("train.mode: downstream mode must be fuse|finetune|sidetune, got '" +
                      mode + "'");
  }
  return m;
}

ModelBundle load_bundle(const Pipeline& pipe, const NamedTensors& ckpt) {
  auto meta = ckpt.find("meta.variant");
  if (meta == ckpt.end()) throw CheckpointError("checkpoint: missing meta.variant");
  ModelBundle m;
  m.variant = meta->second->item() == 0.0 ? PatcherVariant::kPerceiver
                                          : PatcherVariant::kTransformer;
  const auto dims = make_dims(pipe);
  SplitRng rng = SplitRng(pipe.config.train_seed).split("patcher-init");
  if (m.variant == PatcherVariant::kPerceiver) {
    m.perceiver = std::make_unique<PerceiverPatcher>(PerceiverPatcher::init(dims, rng));
    m.perceiver->load(ckpt);
  } else {
    m.transformer = std::make_unique<TransformerPatcher>(TransformerPatcher::init(dims, rng));
    m.transformer->load(ckpt);
  }
  if (ckpt.count("fuser.w_q")) {
    m.fuser = std::make_unique<Fuser>(Fuser::init(
        pipe.config.backbone.model_dim, SplitRng(pipe.config.train_seed).split("fuser-init")));
    m.fuser->load(ckpt);
  }
  if (ckpt.count("sidetune.a")) {
    m.sidetuner = std::make_unique<SideTuner>(SideTuner::init());
    m.sidetuner->load(ckpt);
  }
  return m;
}

namespace {

// Core minibatch loop shared by patching and downstream runs. `make_instance`
// maps one encoded clip to the batch entry the loss machinery consumes.
TrainResult run_training(const Pipeline& pipe, ModelBundle& model, std::size_t epochs,
                         bool use_vac, bool use_atm, bool downstream) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto encoded = encode_for_training(pipe, pipe.dataset.train);
  const std::size_t batch_size = pipe.config.batch_size;
  const double temperature = pipe.config.temperature;

  AdamW optimizer(model.trainable(), pipe.config.optim);

  // Downstream paths compare a single fused/blended vector against text, so
  // the head degenerates to cosine on a one-row matrix.
  SimilarityHead head = model.head();
  if (downstream)
    head = [](const TensorPtr& v, const TensorPtr& t) { return sim_mean_pooled(v, t); };

  auto make_instance = [&](const EncodedClip& ec) {
    BatchInstance inst;
    inst.text = ec.text;
    inst.antonym_text = ec.antonym_text;
    inst.gated = use_atm && ec.gated;
    if (!downstream) {
      inst.patched_tokens = model.patch(ec.tokens);
      if (inst.gated) inst.reversed_patched_tokens = model.patch(ec.reversed_tokens);
      return inst;
    }
    auto fuse_one = [&](const TensorPtr& tokens) {
      auto patched = model.patch(tokens);
      if (model.fuser) return as_row(model.fuser->forward(ec.pooled, patched).fused);
      if (model.sidetuner)
        return as_row(model.sidetuner->blend(ec.pooled, mean_rows(patched)));
      return as_row(l2_normalize(mean_rows(patched)));
    };
    // Downstream finetune keeps the variant's own head over raw patched
    // tokens; fuse/sidetune compare their single fused vector.
    if (!model.fuser && !model.sidetuner) {
      inst.patched_tokens = model.patch(ec.tokens);
      if (inst.gated) inst.reversed_patched_tokens = model.patch(ec.reversed_tokens);
    } else {
      inst.patched_tokens = fuse_one(ec.tokens);
      if (inst.gated) inst.reversed_patched_tokens = fuse_one(ec.reversed_tokens);
    }
    return inst;
  };

  RunRecord record;
  record.config_fingerprint = pipe.config.fingerprint;

  std::vector<std::size_t> order(encoded.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    fisher_yates(order, SplitRng(pipe.config.train_seed).split("shuffle").split(epoch));
    for (std::size_t start = 0; start + 1 < order.size(); start += batch_size) {
      const std::size_t end = std::min(start + batch_size, order.size());
      if (end - start < 2) break;  // contrastive losses need at least two rows
      std::vector<BatchInstance> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(make_instance(encoded[order[i]]));

      LossBreakdown loss = total_loss(batch, head, temperature, use_vac, use_atm);
      const double total = loss.total->item();
      if (!std::isfinite(total))
        throw NumericError("training: non-finite loss at step " + std::to_string(step));
      backward(loss.total);
      optimizer.step();
      optimizer.zero_grad();

      record.loss_log.push_back({step, loss.vtc->item(), loss.vac->item(), loss.atm->item(),
                                 loss.atm_gated_count, total});
      ++step;
    }
  }

  const auto t1 = std::chrono::steady_clock::now();
  record.wall_seconds = std::chrono::duration<double>(t1 - t0).count();

  TrainResult result;
  result.checkpoint = model.checkpoint_tensors(pipe);
  result.record = std::move(record);
  return result;
}

}  // namespace

TrainResult train_patcher(const Pipeline& pipe, ModelBundle& model) {
  const bool use_vac = pipe.config.objectives.count("vac") > 0;
  const bool use_atm = pipe.config.objectives.count("atm") > 0;
  return run_training(pipe, model, pipe.config.patching_epochs(), use_vac, use_atm,
                      /*downstream=*/false);
}

TrainResult train_downstream(const Pipeline& pipe, ModelBundle& model) {
  return run_training(pipe, model, pipe.config.downstream_epochs(), /*use_vac=*/false,
                      /*use_atm=*/false, /*downstream=*/true);
}

}  // namespace paxl
