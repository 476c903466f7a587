#include "paxl/training.hpp"

#include <cmath>

#include "doctest.h"
#include "paxl/errors.hpp"

using namespace paxl;

namespace {

// Small world so training-path tests stay fast.
RunConfig small_config(const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  ConfigMap map;
  map.set("world.train_count", "96");
  map.set("world.eval_count", "40");
  map.set("world.heldout_count", "24");
  map.set("train.batch_size", "16");
  map.set("train.epochs", "1");
  for (const auto& [k, v] : extra) map.set(k, v);
  return resolve_config(map);
}

}  // namespace

TEST_CASE("pipeline construction is deterministic") {
  const auto rc = small_config();
  Pipeline a = build_pipeline(rc);
  Pipeline b = build_pipeline(rc);
  CHECK(write_manifest(a.world, a.dataset) == write_manifest(b.world, b.dataset));
  CHECK(a.backbone.params_hash() == b.backbone.params_hash());
  CHECK(a.thresholds.delta_vt == b.thresholds.delta_vt);
  CHECK(a.saliency.to_tsv() == b.saliency.to_tsv());
}

TEST_CASE("zero-epoch training returns the initialization bit-exactly") {
  const auto rc = small_config({{"train.epochs", "0"}});
  Pipeline pipe = build_pipeline(rc);
  ModelBundle model = init_patcher_bundle(pipe, rc.train_seed);
  const auto init_tensors = serialize_checkpoint(model.checkpoint_tensors(pipe));
  const auto result = train_patcher(pipe, model);
  CHECK(result.record.loss_log.empty());
  CHECK(serialize_checkpoint(result.checkpoint) == init_tensors);
}

TEST_CASE("same config and seed give bit-identical checkpoints and loss logs") {
  const auto rc = small_config();
  Pipeline pipe = build_pipeline(rc);

  auto run = [&]() {
    ModelBundle model = init_patcher_bundle(pipe, rc.train_seed);
    return train_patcher(pipe, model);
  };
  const auto r1 = run();
  const auto r2 = run();
  CHECK(serialize_checkpoint(r1.checkpoint) == serialize_checkpoint(r2.checkpoint));
  CHECK(r1.record.loss_log_tsv() == r2.record.loss_log_tsv());
}

TEST_CASE("first-batch vtc matches between objective sets sharing a seed") {
  const auto rc_full = small_config({{"train.objectives", "vtc,vac,atm"}});
  const auto rc_vtc = small_config({{"train.objectives", "vtc"}});
  Pipeline pipe_full = build_pipeline(rc_full);
  Pipeline pipe_vtc = build_pipeline(rc_vtc);

  ModelBundle m1 = init_patcher_bundle(pipe_full, rc_full.train_seed);
  ModelBundle m2 = init_patcher_bundle(pipe_vtc, rc_vtc.train_seed);
  const auto r1 = train_patcher(pipe_full, m1);
  const auto r2 = train_patcher(pipe_vtc, m2);
  REQUIRE_FALSE(r1.record.loss_log.empty());
  CHECK(r1.record.loss_log[0].vtc == r2.record.loss_log[0].vtc);
  CHECK(r2.record.loss_log[0].vac == 0.0);
  CHECK(r2.record.loss_log[0].atm == 0.0);
  CHECK(r1.record.loss_log[0].atm_gated_count > 0);
}

TEST_CASE("backbone hash is identical before and after every training mode") {
  const auto rc = small_config();
  Pipeline pipe = build_pipeline(rc);
  const auto h0 = pipe.backbone.params_hash();

  ModelBundle patcher = init_patcher_bundle(pipe, rc.train_seed);
  const auto patch_result = train_patcher(pipe, patcher);
  CHECK(pipe.backbone.params_hash() == h0);

  for (const char* mode : {"fuse", "finetune", "sidetune"}) {
    ModelBundle down = init_downstream_bundle(pipe, patch_result.checkpoint, mode, 1234);
    (void)train_downstream(pipe, down);
    CHECK(pipe.backbone.params_hash() == h0);
  }
}

TEST_CASE("downstream modes allocate exactly the advertised parameters") {
  const auto rc = small_config();
  Pipeline pipe = build_pipeline(rc);
  ModelBundle patcher = init_patcher_bundle(pipe, rc.train_seed);
  const auto ckpt = train_patcher(pipe, patcher).checkpoint;

  ModelBundle finetune = init_downstream_bundle(pipe, ckpt, "finetune", 55);
  CHECK(finetune.fuser == nullptr);
  CHECK(finetune.sidetuner == nullptr);

  ModelBundle sidetune = init_downstream_bundle(pipe, ckpt, "sidetune", 55);
  CHECK(sidetune.trainable().size() == finetune.trainable().size() + 1);
  std::size_t extra = 0;
  for (const auto& t : sidetune.trainable()) extra += t->size();
  std::size_t base = 0;
  for (const auto& t : finetune.trainable()) base += t->size();
  CHECK(extra == base + 1);

  ModelBundle fuse = init_downstream_bundle(pipe, ckpt, "fuse", 55);
  REQUIRE(fuse.fuser != nullptr);
  const double ratio = static_cast<double>(extra - 1 + fuse.fuser->trainable_count()) /
                       static_cast<double>(base);
  CHECK(ratio >= 1.8);
  CHECK(ratio <= 2.2);

  CHECK_THROWS_AS(init_downstream_bundle(pipe, ckpt, "none", 55), ConfigError);
}

TEST_CASE("downstream training runs and shrinks its own loss") {
  const auto rc = small_config({{"train.mode", "fuse"}, {"train.epochs", "2"}});
  Pipeline pipe = build_pipeline(rc);
  ModelBundle patcher = init_patcher_bundle(pipe, rc.train_seed);
  const auto ckpt = train_patcher(pipe, patcher).checkpoint;

  ModelBundle fuse = init_downstream_bundle(pipe, ckpt, "fuse", rc.train_seed);
  const auto result = train_downstream(pipe, fuse);
  REQUIRE(result.record.loss_log.size() >= 4);
  CHECK(result.record.loss_log.back().total < result.record.loss_log.front().total);
  for (const auto& step : result.record.loss_log) {
    CHECK(std::isfinite(step.total));
    CHECK(step.vac == 0.0);  // downstream objective is VTC only
    CHECK(step.atm == 0.0);
  }
  CHECK(result.checkpoint.count("fuser.w_q") == 1);
  CHECK(result.checkpoint.count("meta.variant") == 1);
}

TEST_CASE("load_bundle reconstructs variant and heads from checkpoint content") {
  const auto rc = small_config();
  Pipeline pipe = build_pipeline(rc);
  ModelBundle patcher = init_patcher_bundle(pipe, rc.train_seed);
  auto ckpt = train_patcher(pipe, patcher).checkpoint;

  ModelBundle loaded = load_bundle(pipe, ckpt);
  CHECK(loaded.variant == PatcherVariant::kPerceiver);
  CHECK(loaded.perceiver->w_k->values == patcher.perceiver->w_k->values);
  CHECK(loaded.fuser == nullptr);

  ModelBundle fuse = init_downstream_bundle(pipe, ckpt, "fuse", 9);
  auto down_ckpt = train_downstream(pipe, fuse).checkpoint;
  ModelBundle down_loaded = load_bundle(pipe, down_ckpt);
  REQUIRE(down_loaded.fuser != nullptr);
  CHECK(down_loaded.fuser->w_q->values == fuse.fuser->w_q->values);

  ckpt.erase("meta.variant");
  CHECK_THROWS_AS(load_bundle(pipe, ckpt), CheckpointError);
}

TEST_CASE("transformer variant trains end to end") {
  const auto rc = small_config({{"train.variant", "transformer"}, {"train.batch_size", "8"},
                                {"world.train_count", "32"}});
  Pipeline pipe = build_pipeline(rc);
  ModelBundle model = init_patcher_bundle(pipe, rc.train_seed);
  CHECK(model.variant == PatcherVariant::kTransformer);
  const auto result = train_patcher(pipe, model);
  REQUIRE_FALSE(result.record.loss_log.empty());
  for (const auto& step : result.record.loss_log) CHECK(std::isfinite(step.total));
}

TEST_CASE("loss log serializes with the documented columns") {
  RunRecord rec;
  rec.loss_log.push_back({0, 1.5, 0.25, 0.125, 7, 1.875});
  const auto tsv = rec.loss_log_tsv();
  CHECK(tsv.find("step\tvtc\tvac\tatm\tatm_gated_count\ttotal\n") == 0);
  CHECK(tsv.find("0\t1.5\t0.25\t0.125\t7\t1.875\n") != std::string::npos);
}
