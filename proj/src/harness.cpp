#include "paxl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "paxl/errors.hpp"

namespace paxl {

namespace {

double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  return FrozenBackbone::similarity(u, v);
}

VideoFeat vector_feat(std::vector<double> v) {
  VideoFeat f;
  f.rows = 1;
  f.cols = v.size();
  f.data = std::move(v);
  return f;
}

double max_token_score(const VideoFeat& feat, const std::vector<double>& text) {
  double best = -2.0;
  for (std::size_t r = 0; r < feat.rows; ++r) {
    std::vector<double> row(feat.data.begin() + r * feat.cols,
                            feat.data.begin() + (r + 1) * feat.cols);
    best = std::max(best, cosine(row, text));
  }
  return best;
}

double mean_pooled_score(const VideoFeat& feat, const std::vector<double>& text) {
  std::vector<double> mean(feat.cols, 0.0);
  for (std::size_t r = 0; r < feat.rows; ++r)
    for (std::size_t c = 0; c < feat.cols; ++c) mean[c] += feat.data[r * feat.cols + c];
  for (auto& x : mean) x /= static_cast<double>(feat.rows);
  return cosine(mean, text);
}

VideoFeat from_tensor(const TensorPtr& t) {
  VideoFeat f;
  if (t->rank() == 1) {
    f.rows = 1;
    f.cols = t->shape[0];
  } else {
    f.rows = t->shape[0];
    f.cols = t->shape[1];
  }
  f.data = t->values;
  return f;
}

}  // namespace

ModelUnderTest make_backbone_model(const FrozenBackbone& backbone) {
  ModelUnderTest m;
  m.tag = "backbone";
  m.video = [&backbone](const ClipInstance& clip) {
    return vector_feat(backbone.encode_clip(clip).pooled_visual);
  };
  m.text = [&backbone](const std::vector<std::string>& tokens) {
    return backbone.encode_text(tokens);
  };
  m.score = mean_pooled_score;  // rows==1: plain cosine
  return m;
}

ModelUnderTest make_patcher_model(const FrozenBackbone& backbone, const ModelBundle& bundle,
                                  std::string tag) {
  ModelUnderTest m;
  m.tag = std::move(tag);
  const bool max_head = bundle.variant == PatcherVariant::kPerceiver;
  m.video = [&backbone, &bundle](const ClipInstance& clip) {
    NoGradGuard ng;
    auto enc = backbone.encode_clip(clip);
    auto tokens = Tensor::make({enc.token_rows, enc.token_cols}, std::move(enc.visual_tokens));
    return from_tensor(bundle.patch(tokens));
  };
  m.text = [&backbone](const std::vector<std::string>& tokens) {
    return backbone.encode_text(tokens);
  };
  m.score = max_head ? max_token_score : mean_pooled_score;
  return m;
}

ModelUnderTest make_fused_model(const FrozenBackbone& backbone, const ModelBundle& bundle,
                                std::string tag) {
  if (!bundle.fuser) throw ConfigError("make_fused_model: bundle has no fuser");
  ModelUnderTest m;
  m.tag = std::move(tag);
  m.video = [&backbone, &bundle](const ClipInstance& clip) {
    NoGradGuard ng;
    auto enc = backbone.encode_clip(clip);
    auto pooled = Tensor::make({enc.pooled_visual.size()}, enc.pooled_visual);
    auto tokens = Tensor::make({enc.token_rows, enc.token_cols}, std::move(enc.visual_tokens));
    return from_tensor(bundle.fuser->forward(pooled, bundle.patch(tokens)).fused);
  };
  m.text = [&backbone](const std::vector<std::string>& tokens) {
    return backbone.encode_text(tokens);
  };
  m.score = mean_pooled_score;
  return m;
}

ModelUnderTest make_sidetuned_model(const FrozenBackbone& backbone, const ModelBundle& bundle,
                                    std::string tag) {
  if (!bundle.sidetuner) throw ConfigError("make_sidetuned_model: bundle has no side-tuner");
  ModelUnderTest m;
  m.tag = std::move(tag);
  m.video = [&backbone, &bundle](const ClipInstance& clip) {
    NoGradGuard ng;
    auto enc = backbone.encode_clip(clip);
    auto pooled = Tensor::make({enc.pooled_visual.size()}, enc.pooled_visual);
    auto tokens = Tensor::make({enc.token_rows, enc.token_cols}, std::move(enc.visual_tokens));
    auto blended = bundle.sidetuner->blend(pooled, mean_rows(bundle.patch(tokens)));
    return from_tensor(blended);
  };
  m.text = [&backbone](const std::vector<std::string>& tokens) {
    return backbone.encode_text(tokens);
  };
  m.score = mean_pooled_score;
  return m;
}

namespace {

double binary_credit(double pos, double neg) {
  if (pos > neg) return 1.0;
  if (pos < neg) return 0.0;
  return 0.5;  // exact tie
}

}  // namespace

double score_aa(const ModelUnderTest& model, const Dataset& dataset) {
  double credit = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < dataset.eval.size(); ++i) {
    const auto& probes = dataset.eval_probes[i];
    if (!probes.antonym_annotation) continue;
    const auto feat = model.video(dataset.eval[i]);
    const double pos = model.score(feat, model.text(dataset.eval[i].annotation));
    const double neg = model.score(feat, model.text(*probes.antonym_annotation));
    credit += binary_credit(pos, neg);
    ++n;
  }
  if (n == 0) throw ConfigError("score_aa: no antonym probes in split");
  return credit / static_cast<double>(n);
}

double score_vr(const ModelUnderTest& model, const Dataset& dataset) {
  double credit = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < dataset.eval.size(); ++i) {
    const auto& probes = dataset.eval_probes[i];
    if (!probes.reversed) continue;
    const auto text = model.text(dataset.eval[i].annotation);
    const double pos = model.score(model.video(dataset.eval[i]), text);
    const double neg = model.score(model.video(*probes.reversed), text);
    credit += binary_credit(pos, neg);
    ++n;
  }
  if (n == 0) throw ConfigError("score_vr: no reversal probes in split");
  return credit / static_cast<double>(n);
}

double score_or(const ModelUnderTest& model, const Dataset& dataset) {
  double credit = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < dataset.eval.size(); ++i) {
    const auto feat = model.video(dataset.eval[i]);
    const double pos = model.score(feat, model.text(dataset.eval[i].annotation));
    const double neg = model.score(feat, model.text(dataset.eval_probes[i].objswap_annotation));
    credit += binary_credit(pos, neg);
    ++n;
  }
  if (n == 0) throw ConfigError("score_or: empty split");
  return credit / static_cast<double>(n);
}

std::string to_string(RetrievalTask t) {
  switch (t) {
    case RetrievalTask::kFull: return "full";
    case RetrievalTask::kTemplate: return "template";
    case RetrievalTask::kTemporal: return "temporal";
  }
  return "?";
}

RetrievalResult eval_retrieval(const ModelUnderTest& model, const World& world,
                               const std::vector<ClipInstance>& split, RetrievalTask task,
                               const std::vector<std::size_t>& ks) {
  const bool templated = task != RetrievalTask::kFull;
  auto task_annotation = [&](const ClipInstance& c) {
    return templated ? c.template_annotation : c.annotation;
  };
  auto in_task = [&](const ClipInstance& c) {
    if (task != RetrievalTask::kTemporal) return true;
    return world.lexicon().entry(c.action_id).kind == ActionKind::kDirectional;
  };

  // Distinct candidate annotations in first-appearance order.
  std::vector<std::vector<std::string>> pool;
  std::map<std::string, std::size_t> pool_index;
  auto key_of = [](const std::vector<std::string>& ann) {
    std::string k;
    for (const auto& t : ann) {
      k += t;
      k += '\x1f';
    }
    return k;
  };
  for (const auto& c : split) {
    if (!in_task(c)) continue;
    const auto ann = task_annotation(c);
    const auto key = key_of(ann);
    if (!pool_index.count(key)) {
      pool_index[key] = pool.size();
      pool.push_back(ann);
    }
  }
  if (pool.empty()) throw ConfigError("eval_retrieval: no candidates for task");
  for (std::size_t k : ks)
    if (k == 0 || k > pool.size())
      throw ConfigError("eval_retrieval: k=" + std::to_string(k) + " exceeds pool size " +
                        std::to_string(pool.size()));

  std::vector<std::vector<double>> text_feats(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) text_feats[i] = model.text(pool[i]);

  // Video-to-text: rank of the true annotation among all candidates, ties
  // resolved toward lower candidate index.
  std::vector<std::size_t> v2t_hits(ks.size(), 0);
  std::size_t queries = 0;
  // Scores saved for the text-to-video direction (full task).
  std::vector<std::vector<double>> score_matrix;
  std::vector<std::size_t> truth_index;
  for (const auto& c : split) {
    if (!in_task(c)) continue;
    const auto feat = model.video(c);
    const std::size_t truth = pool_index.at(key_of(task_annotation(c)));
    std::vector<double> scores(pool.size());
    for (std::size_t j = 0; j < pool.size(); ++j) scores[j] = model.score(feat, text_feats[j]);
    // Rank = number of candidates strictly better, plus earlier-indexed ties.
    std::size_t rank = 0;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (scores[j] > scores[truth] || (scores[j] == scores[truth] && j < truth)) ++rank;
    }
    for (std::size_t ki = 0; ki < ks.size(); ++ki)
      if (rank < ks[ki]) ++v2t_hits[ki];
    ++queries;
    if (task == RetrievalTask::kFull) {
      score_matrix.push_back(std::move(scores));
      truth_index.push_back(truth);
    }
  }

  RetrievalResult result;
  result.pool_size = pool.size();
  for (std::size_t ki = 0; ki < ks.size(); ++ki)
    result.v2t.emplace_back(ks[ki],
                            static_cast<double>(v2t_hits[ki]) / static_cast<double>(queries));

  if (task == RetrievalTask::kFull) {
    // Text-to-video: for each distinct annotation, rank all clips by score;
    // recalled at k when any clip bearing the annotation is in the top k.
    std::vector<std::size_t> t2v_hits(ks.size(), 0);
    for (std::size_t q = 0; q < pool.size(); ++q) {
      std::vector<std::pair<double, std::size_t>> ranked;  // (-score, clip index)
      ranked.reserve(score_matrix.size());
      for (std::size_t v = 0; v < score_matrix.size(); ++v)
        ranked.emplace_back(-score_matrix[v][q], v);
      std::sort(ranked.begin(), ranked.end());
      for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        const std::size_t k = std::min(ks[ki], ranked.size());
        bool hit = false;
        for (std::size_t r = 0; r < k && !hit; ++r)
          hit = truth_index[ranked[r].second] == q;
        if (hit) ++t2v_hits[ki];
      }
    }
    for (std::size_t ki = 0; ki < ks.size(); ++ki)
      result.t2v.emplace_back(ks[ki],
                              static_cast<double>(t2v_hits[ki]) / static_cast<double>(pool.size()));
  }
  return result;
}

double zero_shot_classify(const ModelUnderTest& model, const ModelUnderTest* ensemble_partner,
                          const std::vector<ClipInstance>& clips,
                          const std::vector<std::vector<std::string>>& candidate_texts,
                          const std::vector<int>& candidate_action_ids, double temperature) {
  if (candidate_texts.empty()) throw ConfigError("zero_shot_classify: empty candidate list");
  if (candidate_texts.size() != candidate_action_ids.size())
    throw ConfigError("zero_shot_classify: candidate/text count mismatch");

  auto path_probs = [&](const ModelUnderTest& path, const ClipInstance& clip) {
    const auto feat = path.video(clip);
    std::vector<double> logits(candidate_texts.size());
    for (std::size_t j = 0; j < candidate_texts.size(); ++j)
      logits[j] = path.score(feat, path.text(candidate_texts[j])) / temperature;
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    double z = 0;
    for (auto& x : logits) {
      x = std::exp(x - mx);
      z += x;
    }
    for (auto& x : logits) x /= z;
    return logits;
  };

  std::size_t correct = 0;
  for (const auto& clip : clips) {
    std::size_t pred;
    if (ensemble_partner) {
      pred = ensemble_predict(path_probs(model, clip), path_probs(*ensemble_partner, clip));
    } else {
      const auto p = path_probs(model, clip);
      pred = 0;
      for (std::size_t j = 1; j < p.size(); ++j)
        if (p[j] > p[pred]) pred = j;
    }
    if (candidate_action_ids[pred] == clip.action_id) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(clips.size());
}

std::string format_metric(double value) {
  // Half-up at the third decimal.
  const double shifted = value * 1000.0;
  const double rounded = std::floor(shifted + 0.5);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", rounded / 1000.0);
  return buf;
}

std::string EvalReport::to_tsv() const {
  std::ostringstream os;
  os << "model_tag\ttask\tmetric\tvalue\tn\tseed\tconfig_fp\n";
  for (const auto& r : rows)
    os << r.model_tag << '\t' << r.task << '\t' << r.metric << '\t' << format_metric(r.value)
       << '\t' << r.n << '\t' << r.seed << '\t' << r.config_fp << '\n';
  return os.str();
}

std::string EvalReport::to_markdown() const {
  // One table per task family, in first-appearance order.
  std::vector<std::string> tasks;
  for (const auto& r : rows)
    if (std::find(tasks.begin(), tasks.end(), r.task) == tasks.end()) tasks.push_back(r.task);
  std::ostringstream os;
  for (const auto& task : tasks) {
    os << "## " << task << "\n\n";
    os << "| model | metric | value | n | seed | config |\n";
    os << "|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
      if (r.task != task) continue;
      os << "| " << r.model_tag << " | " << r.metric << " | " << format_metric(r.value)
         << " | " << r.n << " | " << r.seed << " | " << r.config_fp << " |\n";
    }
    os << "\n";
  }
  return os.str();
}

EvalReport parse_report_tsv(const std::string& tsv) {
  EvalReport report;
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
    ReportRow r;
    std::string field;
    std::getline(ls, r.model_tag, '\t');
    std::getline(ls, r.task, '\t');
    std::getline(ls, r.metric, '\t');
    std::getline(ls, field, '\t');
    r.value = std::stod(field);
    std::getline(ls, field, '\t');
    r.n = static_cast<std::size_t>(std::stoul(field));
    std::getline(ls, field, '\t');
    r.seed = std::stoull(field);
    std::getline(ls, r.config_fp, '\t');
    report.rows.push_back(std::move(r));
  }
  return report;
}

}  // namespace paxl
