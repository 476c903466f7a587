#pragma once

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "paxl/backbone.hpp"
#include "paxl/tensor.hpp"
#include "paxl/world.hpp"

namespace paxl {

// State-change saliency per clip. gated == (delta_vt > delta_threshold AND
// theta_vv < theta_threshold), strict inequalities.
struct SaliencyScore {
  double delta_vt = 0.0;
  double theta_vv = 0.0;
  bool gated = false;
};

struct GateThresholds {
  double delta_vt = 0.003;
  double theta_vv = 0.95;
};

// Reference thresholds as reported for the real-image scorer.
GateThresholds paper_gate_thresholds();

// Per-world calibration: delta threshold at the midpoint between the largest
// static-clip delta and the smallest directional-clip delta over a seeded
// 200-clip draw; the 0.95 theta threshold is kept.
GateThresholds calibrate_gate_thresholds(const World& world, const FrozenBackbone& backbone,
                                         std::size_t draw_count = 200);

// |mean(first-half frame-text sims) - mean(second-half frame-text sims)|.
double saliency_delta_vt(const std::vector<std::vector<double>>& frame_encodings,
                         const std::vector<double>& text);
// Cosine between the mean of the first-half and second-half frame encodings.
double saliency_theta_vv(const std::vector<std::vector<double>>& frame_encodings);

bool gate(double delta_vt, double theta_vv, const GateThresholds& thresholds);

SaliencyScore score_saliency(const FrozenBackbone& backbone, const ClipInstance& clip,
                             const GateThresholds& thresholds);

// clip_id -> saliency, plus the thresholds that produced it.
struct SaliencyTable {
  GateThresholds thresholds;
  std::unordered_map<std::string, SaliencyScore> scores;

  std::string to_tsv() const;
};

SaliencyTable compute_saliency(const FrozenBackbone& backbone, const Dataset& dataset,
                               const GateThresholds& thresholds);

// One training instance inside a batch. Patched tokens come from whichever
// patcher variant is training; reversed tokens are present only when the
// instance is gated (they only feed the temporal matching loss).
struct BatchInstance {
  TensorPtr patched_tokens;           // l x d (or P x d)
  TensorPtr text;                     // d, normalized
  TensorPtr antonym_text;             // d, normalized; null unless directional
  TensorPtr reversed_patched_tokens;  // null unless gated
  bool gated = false;
};

using SimilarityHead = std::function<TensorPtr(const TensorPtr&, const TensorPtr&)>;

struct LossBreakdown {
  TensorPtr vtc;
  TensorPtr vac;
  TensorPtr atm;
  std::size_t atm_gated_count = 0;
  TensorPtr total;
};

// Symmetric InfoNCE over a B x B similarity matrix (entry [i][j] = head
// similarity of video i against text j): mean row cross-entropy and mean
// column cross-entropy, averaged.
TensorPtr vtc_loss(const std::vector<std::vector<TensorPtr>>& sim_matrix, double temperature);

// Video-to-text InfoNCE where each row's candidate set is every batch text
// plus every directional instance's antonym text, averaged over rows that
// have an antonym. Zero (flagged) when the batch has no directional clips.
struct VacResult {
  TensorPtr loss;
  bool had_directional = false;
};
VacResult vac_loss(const std::vector<BatchInstance>& batch, const SimilarityHead& head,
                   double temperature);

// Two-way cross-entropy separating each gated instance from its reversal
// given its own text; zero when nothing is gated.
struct AtmResult {
  TensorPtr loss;
  std::size_t gated_count = 0;
};
AtmResult atm_loss(const std::vector<BatchInstance>& batch, const SimilarityHead& head,
                   double temperature);

// Assembles vtc + lambda_vac * vac + lambda_atm * atm (weights fixed at 1).
LossBreakdown total_loss(const std::vector<BatchInstance>& batch, const SimilarityHead& head,
                         double temperature, bool use_vac, bool use_atm);

}  // namespace paxl
