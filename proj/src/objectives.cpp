#include "paxl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "paxl/errors.hpp"

namespace paxl {

GateThresholds paper_gate_thresholds() { return GateThresholds{0.003, 0.95}; }

double saliency_delta_vt(const std::vector<std::vector<double>>& frame_encodings,
                         const std::vector<double>& text) {
  const std::size_t n = frame_encodings.size();
  if (n == 0 || n % 2 != 0)
    throw ConfigError("saliency_delta_vt: frame count must be even and positive");
  double first = 0, second = 0;
  for (std::size_t i = 0; i < n / 2; ++i)
    first += FrozenBackbone::similarity(frame_encodings[i], text);
  for (std::size_t j = n / 2; j < n; ++j)
    second += FrozenBackbone::similarity(frame_encodings[j], text);
  return std::abs((first - second) / (static_cast<double>(n) / 2.0));
}

double saliency_theta_vv(const std::vector<std::vector<double>>& frame_encodings) {
  const std::size_t n = frame_encodings.size();
  if (n == 0 || n % 2 != 0)
    throw ConfigError("saliency_theta_vv: frame count must be even and positive");
  const std::size_t d = frame_encodings[0].size();
  std::vector<double> first(d, 0.0), second(d, 0.0);
  for (std::size_t i = 0; i < n / 2; ++i)
    for (std::size_t k = 0; k < d; ++k) first[k] += frame_encodings[i][k];
  for (std::size_t j = n / 2; j < n; ++j)
    for (std::size_t k = 0; k < d; ++k) second[k] += frame_encodings[j][k];
  const double half = static_cast<double>(n) / 2.0;
  for (auto& x : first) x /= half;
  for (auto& x : second) x /= half;
  return FrozenBackbone::similarity(first, second);
}

bool gate(double delta_vt, double theta_vv, const GateThresholds& thresholds) {
  return delta_vt > thresholds.delta_vt && theta_vv < thresholds.theta_vv;
}

SaliencyScore score_saliency(const FrozenBackbone& backbone, const ClipInstance& clip,
                             const GateThresholds& thresholds) {
  const auto frames = backbone.frame_encodings(clip);
  const auto text = backbone.encode_text(clip.annotation);
  SaliencyScore s;
  s.delta_vt = saliency_delta_vt(frames, text);
  s.theta_vv = saliency_theta_vv(frames);
  s.gated = gate(s.delta_vt, s.theta_vv, thresholds);
  return s;
}

GateThresholds calibrate_gate_thresholds(const World& world, const FrozenBackbone& backbone,
                                         std::size_t draw_count) {
  // Round-robin over the lexicon with seeded random objects; the draw covers
  // static and directional kinds by construction.
  SplitRng rng = SplitRng(world.config().seed).split("gate-calibration");
  double max_static = 0.0;
  double min_directional = std::numeric_limits<double>::infinity();
  bool saw_static = false, saw_directional = false;
  for (std::size_t i = 0; i < draw_count; ++i) {
    const int action = static_cast<int>(i % world.lexicon().size());
    const auto kind = world.lexicon().entry(action).kind;
    if (kind == ActionKind::kSymmetric) continue;
    const int object = static_cast<int>(rng.next_below(world.config().num_objects));
    const auto clip = world.generate_clip(object, action, 0x7000000 + i);
    const auto frames = backbone.frame_encodings(clip);
    const auto text = backbone.encode_text(clip.annotation);
    const double delta = saliency_delta_vt(frames, text);
    if (kind == ActionKind::kStatic) {
      max_static = std::max(max_static, delta);
      saw_static = true;
    } else {
      min_directional = std::min(min_directional, delta);
      saw_directional = true;
    }
  }
  if (!saw_static || !saw_directional)
    throw ConfigError("gate calibration: draw missed a required action kind");
  GateThresholds t;
  t.delta_vt = 0.5 * (max_static + min_directional);
  t.theta_vv = 0.95;
  return t;
}

SaliencyTable compute_saliency(const FrozenBackbone& backbone, const Dataset& dataset,
                               const GateThresholds& thresholds) {
  SaliencyTable table;
  table.thresholds = thresholds;
  auto add_split = [&](const std::vector<ClipInstance>& clips) {
    for (const auto& c : clips) table.scores[c.clip_id] = score_saliency(backbone, c, thresholds);
  };
  add_split(dataset.train);
  add_split(dataset.eval);
  add_split(dataset.heldout);
  return table;
}

std::string SaliencyTable::to_tsv() const {
  // Rows sorted by clip id for stable output.
  std::vector<std::string> ids;
  ids.reserve(scores.size());
  for (const auto& [id, s] : scores) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  std::ostringstream os;
  os << "clip_id\tdelta_vt\ttheta_vv\tgated\n";
  os.precision(17);
  for (const auto& id : ids) {
    const auto& s = scores.at(id);
    os << id << '\t' << s.delta_vt << '\t' << s.theta_vv << '\t' << (s.gated ? 1 : 0) << '\n';
  }
  return os.str();
}

TensorPtr vtc_loss(const std::vector<std::vector<TensorPtr>>& sim_matrix, double temperature) {
  const std::size_t b = sim_matrix.size();
  if (b < 2) throw ConfigError("vtc_loss: batch size must be at least 2");
  if (temperature <= 0) throw ConfigError("vtc_loss: temperature must be positive");
  const double inv_t = 1.0 / temperature;

  std::vector<TensorPtr> row_terms, col_terms;
  row_terms.reserve(b);
  col_terms.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (sim_matrix[i].size() != b) throw ShapeError("vtc_loss: similarity matrix not square");
    row_terms.push_back(
        cross_entropy_logits(scale(stack_scalars(sim_matrix[i]), inv_t), i));
  }
  for (std::size_t j = 0; j < b; ++j) {
    std::vector<TensorPtr> col;
    col.reserve(b);
    for (std::size_t i = 0; i < b; ++i) col.push_back(sim_matrix[i][j]);
    col_terms.push_back(cross_entropy_logits(scale(stack_scalars(col), inv_t), j));
  }
  return scale(add(mean_scalars(row_terms), mean_scalars(col_terms)), 0.5);
}

VacResult vac_loss(const std::vector<BatchInstance>& batch, const SimilarityHead& head,
                   double temperature) {
  if (temperature <= 0) throw ConfigError("vac_loss: temperature must be positive");
  const double inv_t = 1.0 / temperature;

  std::vector<std::size_t> directional;
  for (std::size_t k = 0; k < batch.size(); ++k)
    if (batch[k].antonym_text) directional.push_back(k);
  if (directional.empty()) return {Tensor::scalar(0.0), false};

  // Candidates: all batch texts in order, then the antonym texts of every
  // directional instance. The target stays the instance's own text index.
  std::vector<TensorPtr> terms;
  terms.reserve(directional.size());
  for (const std::size_t i : directional) {
    std::vector<TensorPtr> logits;
    logits.reserve(batch.size() + directional.size());
    for (const auto& inst : batch)
      logits.push_back(head(batch[i].patched_tokens, inst.text));
    for (const std::size_t k : directional)
      logits.push_back(head(batch[i].patched_tokens, batch[k].antonym_text));
    terms.push_back(cross_entropy_logits(scale(stack_scalars(logits), inv_t), i));
  }
  return {mean_scalars(terms), true};
}

AtmResult atm_loss(const std::vector<BatchInstance>& batch, const SimilarityHead& head,
                   double temperature) {
  if (temperature <= 0) throw ConfigError("atm_loss: temperature must be positive");
  const double inv_t = 1.0 / temperature;

  std::vector<TensorPtr> terms;
  for (const auto& inst : batch) {
    if (!inst.gated) continue;
    if (!inst.reversed_patched_tokens)
      throw ConfigError("atm_loss: gated instance lacks reversed tokens");
    auto fwd = head(inst.patched_tokens, inst.text);
    auto rev = head(inst.reversed_patched_tokens, inst.text);
    terms.push_back(
        cross_entropy_logits(scale(stack_scalars({fwd, rev}), inv_t), 0));
  }
  if (terms.empty()) return {Tensor::scalar(0.0), 0};
  return {mean_scalars(terms), terms.size()};
}

LossBreakdown total_loss(const std::vector<BatchInstance>& batch, const SimilarityHead& head,
                         double temperature, bool use_vac, bool use_atm) {
  std::vector<std::vector<TensorPtr>> sims(batch.size(), std::vector<TensorPtr>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t j = 0; j < batch.size(); ++j)
      sims[i][j] = head(batch[i].patched_tokens, batch[j].text);

  LossBreakdown out;
  out.vtc = vtc_loss(sims, temperature);
  out.total = out.vtc;
  if (use_vac) {
    out.vac = vac_loss(batch, head, temperature).loss;
    out.total = add(out.total, out.vac);
  } else {
    out.vac = Tensor::scalar(0.0);
  }
  if (use_atm) {
    auto atm = atm_loss(batch, head, temperature);
    out.atm = atm.loss;
    out.atm_gated_count = atm.gated_count;
    out.total = add(out.total, out.atm);
  } else {
    out.atm = Tensor::scalar(0.0);
  }
  return out;
}

}  // namespace paxl
