#include "paxl/harness.hpp"

#include <cmath>

#include "doctest.h"
#include "paxl/errors.hpp"

using namespace paxl;

namespace {

struct Fixture {
  RunConfig rc;
  Pipeline pipe;

  Fixture()
      : rc([] {
          ConfigMap map;
          map.set("world.train_count", "60");
          map.set("world.eval_count", "80");
          map.set("world.heldout_count", "36");
          return resolve_config(map);
        }()),
        pipe(build_pipeline(rc)) {}
};

// Scores +1 for the clip's true annotation tokens, 0 otherwise: a world
// oracle that reads the ground truth. Reversed clips are recognized through
// the reversal flag carried by the probe clip.
ModelUnderTest oracle_model(const World& world) {
  ModelUnderTest m;
  m.tag = "oracle";
  m.video = [&world](const ClipInstance& clip) {
    VideoFeat f;
    f.rows = 1;
    f.cols = 3;
    f.data = {static_cast<double>(clip.object_id), static_cast<double>(clip.action_id),
              clip.reversed ? 1.0 : 0.0};
    return f;
  };
  m.text = [&world](const std::vector<std::string>& tokens) {
    // Encode the annotation symbolically: object index (or -1) and action id.
    double obj = -1.0;
    if (tokens.front().rfind("obj", 0) == 0) obj = std::stod(tokens.front().substr(3));
    const double act = world.lexicon().by_name(tokens.back()).id;
    return std::vector<double>{obj, act};
  };
  m.score = [](const VideoFeat& v, const std::vector<double>& t) {
    const bool object_ok = t[0] < 0.0 || v.data[0] == t[0];
    const bool action_ok = v.data[1] == t[1];
    const bool not_reversed = v.data[2] == 0.0;
    return object_ok && action_ok && not_reversed ? 1.0 : 0.0;
  };
  return m;
}

ModelUnderTest constant_model() {
  ModelUnderTest m;
  m.tag = "constant";
  m.video = [](const ClipInstance&) { return VideoFeat{1, 1, {1.0}}; };
  m.text = [](const std::vector<std::string>&) { return std::vector<double>{1.0}; };
  m.score = [](const VideoFeat&, const std::vector<double>&) { return 0.42; };
  return m;
}

ModelUnderTest seeded_random_model(std::uint64_t seed) {
  ModelUnderTest m;
  m.tag = "random";
  m.video = [](const ClipInstance& clip) {
    VideoFeat f;
    f.rows = 1;
    f.cols = 1;
    f.data = {static_cast<double>(fnv1a64(clip.clip_id) ^ (clip.reversed ? 1 : 0))};
    return f;
  };
  m.text = [](const std::vector<std::string>& tokens) {
    std::string key;
    for (const auto& t : tokens) key += t + "|";
    return std::vector<double>{static_cast<double>(fnv1a64(key))};
  };
  m.score = [seed](const VideoFeat& v, const std::vector<double>& t) {
    SplitRng rng(seed ^ static_cast<std::uint64_t>(v.data[0]) ^
                 static_cast<std::uint64_t>(t[0]));
    return rng.next_uniform();
  };
  return m;
}

}  // namespace

TEST_CASE("probe scoring: oracle tops out, constant scorer earns the tie credit") {
  Fixture fx;
  const auto oracle = oracle_model(fx.pipe.world);
  CHECK(score_aa(oracle, fx.pipe.dataset) == doctest::Approx(1.0));
  CHECK(score_vr(oracle, fx.pipe.dataset) == doctest::Approx(1.0));
  CHECK(score_or(oracle, fx.pipe.dataset) == doctest::Approx(1.0));

  const auto flat = constant_model();
  CHECK(score_aa(flat, fx.pipe.dataset) == doctest::Approx(0.5));
  CHECK(score_vr(flat, fx.pipe.dataset) == doctest::Approx(0.5));
  CHECK(score_or(flat, fx.pipe.dataset) == doctest::Approx(0.5));

  SUBCASE("empty split is an error") {
    Dataset empty;
    CHECK_THROWS_AS(score_aa(flat, empty), ConfigError);
    CHECK_THROWS_AS(score_or(flat, empty), ConfigError);
  }
}

TEST_CASE("evaluation never mutates parameters and is idempotent") {
  Fixture fx;
  const auto h0 = fx.pipe.backbone.params_hash();
  const auto model = make_backbone_model(fx.pipe.backbone);
  const double a1 = score_aa(model, fx.pipe.dataset);
  const double a2 = score_aa(model, fx.pipe.dataset);
  CHECK(a1 == a2);
  (void)eval_retrieval(model, fx.pipe.world, fx.pipe.dataset.eval, RetrievalTask::kFull, {1, 5});
  CHECK(fx.pipe.backbone.params_hash() == h0);
}

TEST_CASE("retrieval recalls: exhaustive k, monotonicity, chance level") {
  Fixture fx;
  const auto model = make_backbone_model(fx.pipe.backbone);
  const auto& split = fx.pipe.dataset.eval;

  SUBCASE("k equal to the pool size recalls everything") {
    auto full = eval_retrieval(model, fx.pipe.world, split, RetrievalTask::kTemplate, {1});
    auto res = eval_retrieval(model, fx.pipe.world, split, RetrievalTask::kTemplate,
                              {full.pool_size});
    CHECK(res.v2t[0].second == doctest::Approx(1.0));
  }

  SUBCASE("recall is non-decreasing in k") {
    for (const auto task :
         {RetrievalTask::kFull, RetrievalTask::kTemplate, RetrievalTask::kTemporal}) {
      const auto pool =
          eval_retrieval(model, fx.pipe.world, split, task, {1}).pool_size;
      std::vector<std::size_t> ks;
      for (std::size_t k = 1; k <= pool; k += std::max<std::size_t>(1, pool / 7)) ks.push_back(k);
      const auto res = eval_retrieval(model, fx.pipe.world, split, task, ks);
      for (std::size_t i = 1; i < res.v2t.size(); ++i)
        CHECK(res.v2t[i].second >= res.v2t[i - 1].second);
      for (std::size_t i = 1; i < res.t2v.size(); ++i)
        CHECK(res.t2v[i].second >= res.t2v[i - 1].second);
    }
  }

  SUBCASE("random scorer lands within 3 sigma of 1/C at k=1") {
    const auto rnd = seeded_random_model(99);
    const auto res =
        eval_retrieval(rnd, fx.pipe.world, split, RetrievalTask::kTemplate, {1});
    const double c = static_cast<double>(res.pool_size);
    const double n = 80.0;  // one query per eval clip
    const double sigma = std::sqrt((1.0 / c) * (1.0 - 1.0 / c) / n);
    CHECK(res.v2t[0].second == doctest::Approx(1.0 / c).epsilon(0).scale(1).epsilon(3 * sigma * c));
    CHECK(std::abs(res.v2t[0].second - 1.0 / c) <= 3 * sigma);
  }

  SUBCASE("oversized k rejected") {
    CHECK_THROWS_AS(
        eval_retrieval(model, fx.pipe.world, split, RetrievalTask::kTemplate, {1000}),
        ConfigError);
  }

  SUBCASE("temporal task restricts both queries and pool to directional actions") {
    const auto res =
        eval_retrieval(model, fx.pipe.world, split, RetrievalTask::kTemporal, {1});
    CHECK(res.pool_size == 16);  // 8 train pairs
  }
}

TEST_CASE("object-obscured retrieval strips the backbone's shortcut") {
  Fixture fx;
  const auto model = make_backbone_model(fx.pipe.backbone);
  const auto res = eval_retrieval(model, fx.pipe.world, fx.pipe.dataset.eval,
                                  RetrievalTask::kTemplate, {1});
  // Without object tokens the frozen pathway is near chance: well under
  // 6/C for the C action classes in the pool.
  CHECK(res.v2t[0].second <= 6.0 / static_cast<double>(res.pool_size));
}

TEST_CASE("zero-shot classification with and without ensemble") {
  Fixture fx;
  std::vector<std::vector<std::string>> candidates;
  std::vector<int> ids;
  for (int id : default_heldout_actions()) {
    candidates.push_back({fx.pipe.world.lexicon().entry(id).name});
    ids.push_back(id);
  }

  const auto oracle = oracle_model(fx.pipe.world);
  const double oracle_acc = zero_shot_classify(oracle, nullptr, fx.pipe.dataset.heldout,
                                               candidates, ids, 0.05);
  CHECK(oracle_acc == doctest::Approx(1.0));

  SUBCASE("uniform partner path never changes the argmax") {
    const auto flat = constant_model();
    const double with_flat = zero_shot_classify(oracle, &flat, fx.pipe.dataset.heldout,
                                                candidates, ids, 0.05);
    CHECK(with_flat == doctest::Approx(oracle_acc));
  }

  SUBCASE("empty candidate list rejected") {
    CHECK_THROWS_AS(
        zero_shot_classify(oracle, nullptr, fx.pipe.dataset.heldout, {}, {}, 0.05),
        ConfigError);
  }
}

TEST_CASE("report emission: formatting, round trip, fingerprint") {
  EvalReport report;
  report.rows.push_back({"backbone", "bench", "aa", 0.5004999, 600, 42, "deadbeef01020304"});
  report.rows.push_back({"patcher", "bench", "vr", 0.87650001, 480, 42, "deadbeef01020304"});
  report.rows.push_back({"patcher", "retrieval", "r1_v2t", 1.0 / 3.0, 80, 7, "deadbeef01020304"});

  const auto tsv = report.to_tsv();
  CHECK(tsv.find("model_tag\ttask\tmetric\tvalue\tn\tseed\tconfig_fp\n") == 0);
  CHECK(tsv.find("0.500") != std::string::npos);  // half-up at 3 decimals
  CHECK(tsv.find("0.877") != std::string::npos);
  CHECK(tsv.find("0.333") != std::string::npos);
  CHECK(tsv.find("deadbeef01020304") != std::string::npos);

  const auto parsed = parse_report_tsv(tsv);
  CHECK(parse_report_tsv(parsed.to_tsv()).to_tsv() == parsed.to_tsv());
  REQUIRE(parsed.rows.size() == 3);
  CHECK(parsed.rows[1].metric == "vr");
  CHECK(parsed.rows[1].value == doctest::Approx(0.877));

  SUBCASE("half-up rounding at the boundary") {
    CHECK(format_metric(0.8765) == "0.877");
    CHECK(format_metric(0.1114999) == "0.111");
    CHECK(format_metric(0.0005) == "0.001");
  }

  SUBCASE("markdown groups rows by task") {
    const auto md = report.to_markdown();
    CHECK(md.find("## bench") != std::string::npos);
    CHECK(md.find("## retrieval") != std::string::npos);
    CHECK(md.find("## bench") < md.find("| backbone | aa"));
  }
}

TEST_CASE("patcher and fused model wrappers score eval clips") {
  Fixture fx;
  ModelBundle bundle = init_patcher_bundle(fx.pipe, fx.rc.train_seed);
  const auto patcher_model = make_patcher_model(fx.pipe.backbone, bundle);
  const double aa = score_aa(patcher_model, fx.pipe.dataset);
  CHECK(aa >= 0.0);
  CHECK(aa <= 1.0);

  ModelBundle fused = init_patcher_bundle(fx.pipe, fx.rc.train_seed);
  fused.fuser = std::make_unique<Fuser>(Fuser::init(32, SplitRng(4)));
  const auto fused_model = make_fused_model(fx.pipe.backbone, fused);
  CHECK(score_or(fused_model, fx.pipe.dataset) >= 0.0);

  ModelBundle side = init_patcher_bundle(fx.pipe, fx.rc.train_seed);
  side.sidetuner = std::make_unique<SideTuner>(SideTuner::init());
  const auto side_model = make_sidetuned_model(fx.pipe.backbone, side);
  CHECK(score_or(side_model, fx.pipe.dataset) >= 0.0);

  CHECK_THROWS_AS(make_fused_model(fx.pipe.backbone, bundle), ConfigError);
}
