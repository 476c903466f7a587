#include "paxl/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "paxl/config.hpp"
#include "paxl/errors.hpp"
#include "paxl/harness.hpp"
#include "paxl/training.hpp"
#include "paxl/verification.hpp"

namespace paxl::cli {

namespace {

namespace fs = std::filesystem;

constexpr const char* kUsage =
    "usage: paxl <verb> --config PATH [--out DIR] [--set section.key=value ...] [--seed N]\n"
    "verbs: gen-data train-patcher train-downstream eval-bench eval-retrieval zero-shot\n"
    "       grad-check export-report\n";

struct Invocation {
  std::string verb;
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::optional<std::string> seed;
};

Invocation parse_args(const std::vector<std::string>& args) {
  if (args.empty()) throw ConfigError(std::string("missing verb\n") + kUsage);
  Invocation inv;
  inv.verb = args[0];
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    auto need_value = [&](const char* flag) -> const std::string& {
      if (i + 1 >= args.size()) throw ConfigError(std::string(flag) + " expects a value");
      return args[++i];
    };
    if (a == "--config") {
      inv.config_path = need_value("--config");
    } else if (a == "--out") {
      inv.out_dir = need_value("--out");
    } else if (a == "--set") {
      inv.overrides.push_back(need_value("--set"));
    } else if (a == "--seed") {
      inv.seed = need_value("--seed");
    } else {
      throw ConfigError("unknown flag '" + a + "'\n" + kUsage);
    }
  }
  if (inv.config_path.empty()) throw ConfigError(std::string("--config is required\n") + kUsage);
  return inv;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
}

struct Context {
  ConfigMap map;
  RunConfig config;
  fs::path out;
};

Context make_context(const Invocation& inv) {
  Context ctx;
  ctx.map = ConfigMap::from_file(inv.config_path);
  if (inv.seed) ctx.map.set("seed", *inv.seed);
  for (const auto& ov : inv.overrides) ctx.map.apply_override(ov);
  ctx.config = resolve_config(ctx.map);
  ctx.out = inv.out_dir.empty() ? fs::path("runs") / ctx.config.fingerprint
                                : fs::path(inv.out_dir);
  fs::create_directories(ctx.out);
  write_file(ctx.out / "config.effective.ini", ctx.map.serialize());
  return ctx;
}

// Evaluation model plus the parameter bundle its closures reference.
struct EvalModel {
  std::unique_ptr<ModelBundle> bundle;
  ModelUnderTest model;
};

fs::path default_checkpoint(const Context& ctx, const std::string& role) {
  if (role == "patcher") return ctx.out / "patcher.paxl";
  if (role == "fuser") return ctx.out / "downstream_fuse.paxl";
  return ctx.out / "downstream_sidetune.paxl";
}

EvalModel build_eval_model(const Context& ctx, const Pipeline& pipe) {
  EvalModel em;
  const std::string& role = ctx.config.eval_model;
  if (role == "backbone") {
    em.model = make_backbone_model(pipe.backbone);
    return em;
  }
  fs::path ckpt_path = ctx.config.eval_checkpoint.empty()
                           ? default_checkpoint(ctx, role)
                           : fs::path(ctx.config.eval_checkpoint);
  const auto ckpt = load_checkpoint(ckpt_path);
  em.bundle = std::make_unique<ModelBundle>(load_bundle(pipe, ckpt));
  if (role == "patcher") {
    em.model = make_patcher_model(pipe.backbone, *em.bundle);
  } else if (role == "fuser") {
    em.model = make_fused_model(pipe.backbone, *em.bundle);
  } else {
    em.model = make_sidetuned_model(pipe.backbone, *em.bundle);
  }
  return em;
}

void print_metric(const std::string& name, double value) {
  std::cout << name << " = " << format_metric(value) << "\n";
}

int cmd_gen_data(const Context& ctx) {
  Pipeline pipe = build_pipeline(ctx.config);
  write_file(ctx.out / "manifest.tsv", write_manifest(pipe.world, pipe.dataset));
  write_file(ctx.out / "saliency.tsv", pipe.saliency.to_tsv());
  if (ctx.config.export_frames) {
    const auto store = export_frames(pipe.dataset);
    write_file(ctx.out / "frames.bin", store.blob);
    write_file(ctx.out / "frames.index.tsv", store.offset_table_tsv);
  }
  std::cout << "train_clips = " << pipe.dataset.train.size() << "\n"
            << "eval_clips = " << pipe.dataset.eval.size() << "\n"
            << "heldout_clips = " << pipe.dataset.heldout.size() << "\n"
            << "gate_delta_vt = " << pipe.thresholds.delta_vt << "\n"
            << "gate_theta_vv = " << pipe.thresholds.theta_vv << "\n";
  return 0;
}

int cmd_train_patcher(const Context& ctx) {
  Pipeline pipe = build_pipeline(ctx.config);
  ModelBundle model = init_patcher_bundle(pipe, ctx.config.train_seed);
  TrainResult result = train_patcher(pipe, model);
  save_checkpoint(result.checkpoint, ctx.out / "patcher.paxl");
  write_file(ctx.out / "patcher_losslog.tsv", result.record.loss_log_tsv());
  const double final_loss =
      result.record.loss_log.empty() ? 0.0 : result.record.loss_log.back().total;
  std::cout << "steps = " << result.record.loss_log.size() << "\n"
            << "final_total_loss = " << final_loss << "\n"
            << "wall_seconds = " << result.record.wall_seconds << "\n"
            << "checkpoint = " << (ctx.out / "patcher.paxl").string() << "\n";
  return 0;
}

int cmd_train_downstream(const Context& ctx) {
  if (ctx.config.mode == "none")
    throw ConfigError("train-downstream: train.mode must be fuse|finetune|sidetune");
  Pipeline pipe = build_pipeline(ctx.config);
  fs::path patcher_path = ctx.config.eval_checkpoint.empty()
                              ? ctx.out / "patcher.paxl"
                              : fs::path(ctx.config.eval_checkpoint);
  const auto patcher_ckpt = load_checkpoint(patcher_path);
  ModelBundle model =
      init_downstream_bundle(pipe, patcher_ckpt, ctx.config.mode, ctx.config.train_seed);
  TrainResult result = train_downstream(pipe, model);
  const fs::path out_path = ctx.out / ("downstream_" + ctx.config.mode + ".paxl");
  save_checkpoint(result.checkpoint, out_path);
  write_file(ctx.out / ("downstream_" + ctx.config.mode + "_losslog.tsv"),
             result.record.loss_log_tsv());
  const double final_loss =
      result.record.loss_log.empty() ? 0.0 : result.record.loss_log.back().total;
  std::cout << "steps = " << result.record.loss_log.size() << "\n"
            << "final_total_loss = " << final_loss << "\n"
            << "wall_seconds = " << result.record.wall_seconds << "\n"
            << "checkpoint = " << out_path.string() << "\n";
  return 0;
}

int cmd_eval_bench(const Context& ctx) {
  Pipeline pipe = build_pipeline(ctx.config);
  EvalModel em = build_eval_model(ctx, pipe);
  const double aa = score_aa(em.model, pipe.dataset);
  const double vr = score_vr(em.model, pipe.dataset);
  const double orr = score_or(em.model, pipe.dataset);
  EvalReport report;
  const auto n = pipe.dataset.eval.size();
  report.rows.push_back({em.model.tag, "bench", "aa", aa, n, ctx.config.seed,
                         ctx.config.fingerprint});
  report.rows.push_back({em.model.tag, "bench", "vr", vr, n, ctx.config.seed,
                         ctx.config.fingerprint});
  report.rows.push_back({em.model.tag, "bench", "or", orr, n, ctx.config.seed,
                         ctx.config.fingerprint});
  write_file(ctx.out / "bench_report.tsv", report.to_tsv());
  write_file(ctx.out / "bench_report.md", report.to_markdown());
  print_metric("aa", aa);
  print_metric("vr", vr);
  print_metric("or", orr);
  return 0;
}

int cmd_eval_retrieval(const Context& ctx) {
  Pipeline pipe = build_pipeline(ctx.config);
  EvalModel em = build_eval_model(ctx, pipe);
  EvalReport report;
  const std::vector<std::size_t> ks{1, 5};
  for (const auto task : {RetrievalTask::kFull, RetrievalTask::kTemplate,
                          RetrievalTask::kTemporal}) {
    const auto res = eval_retrieval(em.model, pipe.world, pipe.dataset.eval, task, ks);
    for (const auto& [k, v] : res.v2t) {
      const std::string metric = "r" + std::to_string(k) + "_v2t";
      report.rows.push_back({em.model.tag, to_string(task), metric, v,
                             pipe.dataset.eval.size(), ctx.config.seed,
                             ctx.config.fingerprint});
      print_metric(to_string(task) + "." + metric, v);
    }
    for (const auto& [k, v] : res.t2v) {
      const std::string metric = "r" + std::to_string(k) + "_t2v";
      report.rows.push_back({em.model.tag, to_string(task), metric, v, res.pool_size,
                             ctx.config.seed, ctx.config.fingerprint});
      print_metric(to_string(task) + "." + metric, v);
    }
  }
  write_file(ctx.out / "retrieval_report.tsv", report.to_tsv());
  write_file(ctx.out / "retrieval_report.md", report.to_markdown());
  return 0;
}

int cmd_zero_shot(const Context& ctx) {
  Pipeline pipe = build_pipeline(ctx.config);
  std::vector<std::vector<std::string>> candidates;
  std::vector<int> candidate_ids;
  for (int id : default_heldout_actions()) {
    candidates.push_back({pipe.world.lexicon().entry(id).name});
    candidate_ids.push_back(id);
  }

  EvalReport report;
  auto add_row = [&](const std::string& tag, double acc) {
    report.rows.push_back({tag, "zero_shot_heldout", "accuracy", acc,
                           pipe.dataset.heldout.size(), ctx.config.seed,
                           ctx.config.fingerprint});
    print_metric(tag + ".accuracy", acc);
  };

  ModelUnderTest backbone_model = make_backbone_model(pipe.backbone);
  add_row("backbone", zero_shot_classify(backbone_model, nullptr, pipe.dataset.heldout,
                                         candidates, candidate_ids, ctx.config.temperature));
  if (ctx.config.eval_model != "backbone") {
    EvalModel em = build_eval_model(ctx, pipe);
    add_row(em.model.tag,
            zero_shot_classify(em.model, nullptr, pipe.dataset.heldout, candidates,
                               candidate_ids, ctx.config.temperature));
    add_row("ensemble",
            zero_shot_classify(em.model, &backbone_model, pipe.dataset.heldout, candidates,
                               candidate_ids, ctx.config.temperature));
  }
  write_file(ctx.out / "zeroshot_report.tsv", report.to_tsv());
  write_file(ctx.out / "zeroshot_report.md", report.to_markdown());
  return 0;
}

int cmd_grad_check(const Context& ctx) {
  const auto entries = run_grad_battery();
  write_file(ctx.out / "gradcheck.tsv", battery_tsv(entries));
  for (const auto& e : entries)
    std::cout << e.op << " max_rel_err = " << e.max_rel_err << (e.pass ? "" : " FAIL") << "\n";
  if (!battery_passed(entries)) {
    std::cerr << "grad-check: failures detected\n";
    return 2;
  }
  return 0;
}

int cmd_export_report(const Context& ctx) {
  std::size_t count = 0;
  for (const auto& entry : fs::directory_iterator(ctx.out)) {
    const auto name = entry.path().filename().string();
    if (name.size() > 11 && name.substr(name.size() - 11) == "_report.tsv") {
      std::ifstream f(entry.path());
      std::stringstream ss;
      ss << f.rdbuf();
      const auto report = parse_report_tsv(ss.str());
      fs::path md = entry.path();
      md.replace_extension(".md");
      write_file(md, report.to_markdown());
      std::cout << "exported " << md.string() << "\n";
      ++count;
    }
  }
  if (count == 0) std::cout << "no *_report.tsv files under " << ctx.out.string() << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  try {
    const Invocation inv = parse_args(args);
    // Verb and config validation happen before anything touches the disk.
    const std::vector<std::string> verbs{"gen-data",       "train-patcher", "train-downstream",
                                         "eval-bench",     "eval-retrieval", "zero-shot",
                                         "grad-check",     "export-report"};
    if (std::find(verbs.begin(), verbs.end(), inv.verb) == verbs.end())
      throw ConfigError("unknown verb '" + inv.verb + "'\n" + kUsage);
    const Context ctx = make_context(inv);
    if (inv.verb == "gen-data") return cmd_gen_data(ctx);
    if (inv.verb == "train-patcher") return cmd_train_patcher(ctx);
    if (inv.verb == "train-downstream") return cmd_train_downstream(ctx);
    if (inv.verb == "eval-bench") return cmd_eval_bench(ctx);
    if (inv.verb == "eval-retrieval") return cmd_eval_retrieval(ctx);
    if (inv.verb == "zero-shot") return cmd_zero_shot(ctx);
    if (inv.verb == "grad-check") return cmd_grad_check(ctx);
    return cmd_export_report(ctx);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace paxl::cli
