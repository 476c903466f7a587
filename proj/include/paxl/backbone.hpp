#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paxl/checkpoint.hpp"
#include "paxl/lexicon.hpp"
#include "paxl/world.hpp"

namespace paxl {

struct BackboneConfig {
  std::size_t embed_dim = 48;  // D: token width
  std::size_t model_dim = 32;  // d: pooled/text width
  double epsilon = 0.05;       // antonym direction scale in text embeddings
  std::uint64_t seed = 0;

  void validate() const;
};

// Frozen outputs for one clip.
struct BackboneEncoding {
  std::size_t token_rows = 0;  // P = frames * patches
  std::size_t token_cols = 0;  // D
  std::vector<double> visual_tokens;  // P x D, ordered by (frame, patch)
  std::vector<double> pooled_visual;  // d, L2-normalized
};

// Deterministic, parameter-frozen mock video-language encoder, built so that
// object identity is strongly aligned across modalities while antonym
// direction survives only as an epsilon-scaled text component that is
// decorrelated from every pooled visual regularity. Mean pooling over all
// tokens makes the pooled visual exactly invariant to frame reversal.
//
// Construction notes:
//  - Text and visual pooling share one projection; a frozen random pair of
//    projections would leave the modalities unaligned and no probe solvable.
//  - Action-pair base embeddings point along the pooled image of the pair's
//    pose anchor, which gives the pooled pathway genuine pair-level (never
//    direction-level) zero-shot signal.
//  - Antonym direction vectors are orthogonalized, in the pooled space,
//    against the pair's fixed pooled component, so the backbone's antonym
//    margin has no systematic per-pair sign.
//  - The held-out domain renders through per-patch projections shifted by a
//    zero-sum perturbation: token-level features move, the patch mean (and
//    hence the pooled visual) does not.
class FrozenBackbone {
 public:
  FrozenBackbone(const WorldConfig& world, const ActionLexicon& lexicon, BackboneConfig cfg);

  const BackboneConfig& config() const { return cfg_; }
  std::size_t token_count() const { return frames_ * patches_; }  // P

  BackboneEncoding encode_clip(const ClipInstance& clip) const;
  // Sum of token embeddings, projected and L2-normalized.
  std::vector<double> encode_text(const std::vector<std::string>& tokens) const;
  // Per-frame pooled encodings (N x d, each normalized) for saliency metrics.
  std::vector<std::vector<double>> frame_encodings(const ClipInstance& clip) const;

  static double similarity(const std::vector<double>& u, const std::vector<double>& v);

  // D-dim embedding of a single token (object, action or "something").
  std::vector<double> token_embedding(const std::string& token) const;

  NamedTensors named_params() const;  // prefixed "backbone."
  std::uint64_t params_hash() const;

 private:
  const double* patch_proj(std::size_t patch, bool heldout) const;
  void pool_tokens(const std::vector<double>& tokens, std::vector<double>& pooled) const;

  BackboneConfig cfg_;
  std::size_t num_objects_, frames_, patches_, state_dim_;
  // Flattened parameter blocks; frozen after construction.
  std::vector<double> obj_embed_;        // num_objects x D
  std::vector<double> something_embed_;  // D
  std::vector<double> action_embed_;     // num_actions x D
  std::vector<double> patch_proj_;       // patches x D x state_dim
  std::vector<double> patch_proj_heldout_;
  std::vector<double> proj_;  // d x D shared pooling projection
  std::vector<std::string> action_names_;
};

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm(const std::vector<double>& a);
void l2_normalize_inplace(std::vector<double>& v);

}  // namespace paxl
