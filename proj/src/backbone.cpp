#include "paxl/backbone.hpp"

#include <cmath>
#include <cstring>

#include "paxl/errors.hpp"
#include "paxl/rng.hpp"

namespace paxl {

namespace {

constexpr double kObjScale = 1.0;    // object embedding norm
constexpr double kBaseScale = 0.6;   // action pair base norm
constexpr double kPoseGain = 3.6;    // per-patch pose projection gain
constexpr double kHeldoutShift = 1.25;  // zero-sum projection perturbation scale
// Pose coordinates are centered before projection; anchors hover around this
// value, so the shared offset would otherwise dominate every frame encoding.
constexpr double kPoseCenter = 0.5;
// Fraction of the pair's motion axis mixed into its text base: the pair text
// "knows" which kind of change it names (never the direction), which keeps
// frame-text drift bounded away from zero for every directional clip.
constexpr double kPairAxisMix = 0.6;

std::vector<double> random_unit(SplitRng rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.next_gaussian();
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

void l2_normalize_inplace(std::vector<double>& v) {
  const double n = norm(v);
  if (n < 1e-12) throw DegenerateVectorError("l2_normalize: norm below 1e-12");
  for (auto& x : v) x /= n;
}

void BackboneConfig::validate() const {
  if (embed_dim < kPoseDim) throw ConfigError("backbone.embed_dim too small");
  if (model_dim < 2 || model_dim > embed_dim)
    throw ConfigError("backbone.model_dim must lie in [2, embed_dim]");
  if (epsilon <= 0) throw ConfigError("backbone.epsilon must be positive");
}

FrozenBackbone::FrozenBackbone(const WorldConfig& world, const ActionLexicon& lexicon,
                               BackboneConfig cfg)
    : cfg_(cfg),
      num_objects_(world.num_objects),
      frames_(world.frames_per_clip),
      patches_(world.patches_per_frame),
      state_dim_(world.state_dim()) {
  cfg_.validate();
  const std::size_t D = cfg_.embed_dim, d = cfg_.model_dim, m = state_dim_;
  SplitRng root(cfg_.seed);

  obj_embed_.resize(num_objects_ * D);
  for (std::size_t o = 0; o < num_objects_; ++o) {
    auto u = random_unit(root.split("obj").split(o), D);
    for (std::size_t j = 0; j < D; ++j) obj_embed_[o * D + j] = kObjScale * u[j];
  }
  something_embed_ = random_unit(root.split("tok").split("something"), D);

  // Per-patch projection: object columns carry the shared object embedding
  // table, pose columns are independent Gaussian views of the pose block.
  const double sigma_g = kPoseGain / std::sqrt(static_cast<double>(D));
  patch_proj_.assign(patches_ * D * m, 0.0);
  for (std::size_t p = 0; p < patches_; ++p) {
    SplitRng prng = root.split("patch").split(p);
    double* A = &patch_proj_[p * D * m];
    for (std::size_t r = 0; r < D; ++r)
      for (std::size_t o = 0; o < num_objects_; ++o) A[r * m + o] = obj_embed_[o * D + r];
    for (std::size_t r = 0; r < D; ++r)
      for (std::size_t c = 0; c < kPoseDim; ++c)
        A[r * m + num_objects_ + c] = prng.next_gaussian(sigma_g);
  }

  // Held-out rendering: per-patch shifts that sum to zero across patches, so
  // the patch mean (and the pooled visual) is unchanged while every
  // individual token moves.
  {
    std::vector<std::vector<double>> shifts(patches_);
    std::vector<double> mean(D * m, 0.0);
    for (std::size_t p = 0; p < patches_; ++p) {
      SplitRng hrng = root.split("heldout").split(p);
      shifts[p].resize(D * m);
      for (auto& x : shifts[p]) x = hrng.next_gaussian(sigma_g * kHeldoutShift);
      for (std::size_t i = 0; i < D * m; ++i) mean[i] += shifts[p][i];
    }
    for (auto& x : mean) x /= static_cast<double>(patches_);
    patch_proj_heldout_ = patch_proj_;
    for (std::size_t p = 0; p < patches_; ++p)
      for (std::size_t i = 0; i < D * m; ++i)
        patch_proj_heldout_[p * D * m + i] += shifts[p][i] - mean[i];
  }

  proj_.resize(d * D);
  {
    SplitRng prng = root.split("proj");
    const double s = 1.0 / std::sqrt(static_cast<double>(D));
    for (auto& x : proj_) x = prng.next_gaussian(s);
  }

  // Pose-block mean projection across patches, restricted to pose columns.
  std::vector<double> gbar(D * kPoseDim, 0.0);
  for (std::size_t p = 0; p < patches_; ++p)
    for (std::size_t r = 0; r < D; ++r)
      for (std::size_t c = 0; c < kPoseDim; ++c)
        gbar[r * kPoseDim + c] += patch_proj_[p * D * m + r * m + num_objects_ + c];
  for (auto& x : gbar) x /= static_cast<double>(patches_);
  auto gbar_apply = [&](const std::array<double, kPoseDim>& pose) {
    std::vector<double> out(D, 0.0);
    for (std::size_t r = 0; r < D; ++r)
      for (std::size_t c = 0; c < kPoseDim; ++c) out[r] += gbar[r * kPoseDim + c] * pose[c];
    return out;
  };
  auto project = [&](const std::vector<double>& x) {
    std::vector<double> out(d, 0.0);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t j = 0; j < D; ++j) out[r] += proj_[r * D + j] * x[j];
    return out;
  };

  // One temporal-polarity axis shared by every antonym pair: antonym members
  // sit at base +/- epsilon * dir along this single axis. Its pooled image
  // is orthogonalized against every pair's fixed pooled anchor component, so
  // the frozen pathway keeps no systematic antonym margin, while a trained
  // head only ever needs to steer one output direction.
  std::vector<double> polarity = random_unit(root.split("dir"), D);
  {
    std::vector<std::vector<double>> anchors_d;  // projected pair anchors
    std::vector<std::vector<double>> anchors_D;
    for (const auto& e : lexicon.entries()) {
      if (!e.antonym_id || e.id > *e.antonym_id) continue;
      std::array<double, kPoseDim> centered{};
      for (std::size_t c = 0; c < kPoseDim; ++c) centered[c] = e.anchor[c] - kPoseCenter;
      std::vector<double> ga = gbar_apply(centered);
      anchors_D.push_back(ga);
      anchors_d.push_back(project(ga));
    }
    const std::size_t n = anchors_d.size();
    // Solve G alpha = b where G is the Gram matrix of the projected anchors,
    // then subtract alpha-weighted anchors in embedding space.
    std::vector<double> G(n * n), b(n);
    const auto pdir = project(polarity);
    for (std::size_t i = 0; i < n; ++i) {
      b[i] = dot(pdir, anchors_d[i]);
      for (std::size_t j = 0; j < n; ++j) G[i * n + j] = dot(anchors_d[i], anchors_d[j]);
    }
    // Gaussian elimination with partial pivoting.
    std::vector<double> alpha = b;
    for (std::size_t col = 0; col < n; ++col) {
      std::size_t piv = col;
      for (std::size_t r = col + 1; r < n; ++r)
        if (std::abs(G[r * n + col]) > std::abs(G[piv * n + col])) piv = r;
      for (std::size_t c = 0; c < n; ++c) std::swap(G[col * n + c], G[piv * n + c]);
      std::swap(alpha[col], alpha[piv]);
      const double diag = G[col * n + col];
      for (std::size_t r = col + 1; r < n; ++r) {
        const double f = G[r * n + col] / diag;
        for (std::size_t c = col; c < n; ++c) G[r * n + c] -= f * G[col * n + c];
        alpha[r] -= f * alpha[col];
      }
    }
    for (std::size_t col = n; col-- > 0;) {
      for (std::size_t c = col + 1; c < n; ++c) alpha[col] -= G[col * n + c] * alpha[c];
      alpha[col] /= G[col * n + col];
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < D; ++j) polarity[j] -= alpha[i] * anchors_D[i][j];
    l2_normalize_inplace(polarity);
  }

  action_embed_.assign(lexicon.size() * D, 0.0);
  action_names_.resize(lexicon.size());
  for (const auto& e : lexicon.entries()) {
    action_names_[static_cast<std::size_t>(e.id)] = e.name;
    const int base_id = e.antonym_id ? std::min(e.id, *e.antonym_id) : e.id;
    const auto& base_entry = lexicon.entry(base_id);
    std::array<double, kPoseDim> mix{};
    for (std::size_t c = 0; c < kPoseDim; ++c) {
      mix[c] = base_entry.anchor[c] - kPoseCenter;
      if (e.antonym_id) mix[c] += kPairAxisMix * base_entry.direction[c];
    }
    std::vector<double> base = gbar_apply(mix);
    l2_normalize_inplace(base);
    for (auto& x : base) x *= kBaseScale;

    double* emb = &action_embed_[static_cast<std::size_t>(e.id) * D];
    for (std::size_t j = 0; j < D; ++j) emb[j] = base[j];

    if (e.antonym_id) {
      const double sign = e.id == base_id ? 1.0 : -1.0;
      for (std::size_t j = 0; j < D; ++j) emb[j] += sign * cfg_.epsilon * polarity[j];
    }
  }
}

const double* FrozenBackbone::patch_proj(std::size_t patch, bool heldout) const {
  const auto& table = heldout ? patch_proj_heldout_ : patch_proj_;
  return &table[patch * cfg_.embed_dim * state_dim_];
}

BackboneEncoding FrozenBackbone::encode_clip(const ClipInstance& clip) const {
  if (clip.num_frames != frames_ || clip.state_dim != state_dim_)
    throw ShapeError("encode_clip: clip dims " + std::to_string(clip.num_frames) + "x" +
                     std::to_string(clip.state_dim) + " do not match world config");
  const std::size_t D = cfg_.embed_dim, m = state_dim_;
  const bool heldout = clip.split == Split::kHeldoutDomain;

  BackboneEncoding enc;
  enc.token_rows = frames_ * patches_;
  enc.token_cols = D;
  enc.visual_tokens.assign(enc.token_rows * D, 0.0);
  std::vector<double> state(m);
  for (std::size_t f = 0; f < frames_; ++f) {
    const double* x = clip.frame(f);
    for (std::size_t c = 0; c < m; ++c)
      state[c] = c < num_objects_ ? x[c] : x[c] - kPoseCenter;
    for (std::size_t p = 0; p < patches_; ++p) {
      const double* A = patch_proj(p, heldout);
      double* tok = &enc.visual_tokens[(f * patches_ + p) * D];
      for (std::size_t r = 0; r < D; ++r) {
        double s = 0;
        const double* row = A + r * m;
        for (std::size_t c = 0; c < m; ++c) s += row[c] * state[c];
        tok[r] = s;
      }
    }
  }
  pool_tokens(enc.visual_tokens, enc.pooled_visual);
  return enc;
}

// Mean over all tokens, accumulated frame-pairwise (i, N-1-i) so the result
// is bit-identical under frame reversal; then projected and normalized.
void FrozenBackbone::pool_tokens(const std::vector<double>& tokens,
                                 std::vector<double>& pooled) const {
  const std::size_t D = cfg_.embed_dim, d = cfg_.model_dim;
  std::vector<double> frame_mean(frames_ * D, 0.0);
  for (std::size_t f = 0; f < frames_; ++f) {
    double* fm = &frame_mean[f * D];
    for (std::size_t p = 0; p < patches_; ++p) {
      const double* tok = &tokens[(f * patches_ + p) * D];
      for (std::size_t r = 0; r < D; ++r) fm[r] += tok[r];
    }
    for (std::size_t r = 0; r < D; ++r) fm[r] /= static_cast<double>(patches_);
  }
  std::vector<double> total(D, 0.0);
  for (std::size_t i = 0; i < frames_ / 2; ++i) {
    const double* a = &frame_mean[i * D];
    const double* b = &frame_mean[(frames_ - 1 - i) * D];
    for (std::size_t r = 0; r < D; ++r) total[r] += a[r] + b[r];
  }
  for (std::size_t r = 0; r < D; ++r) total[r] /= static_cast<double>(frames_);

  pooled.assign(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < D; ++j) s += proj_[r * D + j] * total[j];
    pooled[r] = s;
  }
  l2_normalize_inplace(pooled);
}

std::vector<double> FrozenBackbone::token_embedding(const std::string& token) const {
  const std::size_t D = cfg_.embed_dim;
  if (token == "something") return something_embed_;
  if (token.size() >= 4 && token.compare(0, 3, "obj") == 0) {
    const int o = std::stoi(token.substr(3));
    if (o >= 0 && o < static_cast<int>(num_objects_)) {
      return {obj_embed_.begin() + o * D, obj_embed_.begin() + (o + 1) * D};
    }
  }
  for (std::size_t a = 0; a < action_names_.size(); ++a) {
    if (action_names_[a] == token)
      return {action_embed_.begin() + a * D, action_embed_.begin() + (a + 1) * D};
  }
  throw IndexError("encode_text: unknown token '" + token + "'");
}

std::vector<double> FrozenBackbone::encode_text(const std::vector<std::string>& tokens) const {
  const std::size_t D = cfg_.embed_dim, d = cfg_.model_dim;
  std::vector<double> acc(D, 0.0);
  for (const auto& t : tokens) {
    const auto emb = token_embedding(t);
    for (std::size_t j = 0; j < D; ++j) acc[j] += emb[j];
  }
  std::vector<double> out(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < D; ++j) s += proj_[r * D + j] * acc[j];
    out[r] = s;
  }
  l2_normalize_inplace(out);
  return out;
}

std::vector<std::vector<double>> FrozenBackbone::frame_encodings(
    const ClipInstance& clip) const {
  const auto enc = encode_clip(clip);
  const std::size_t D = cfg_.embed_dim, d = cfg_.model_dim;
  std::vector<std::vector<double>> out(frames_);
  for (std::size_t f = 0; f < frames_; ++f) {
    std::vector<double> fm(D, 0.0);
    for (std::size_t p = 0; p < patches_; ++p) {
      const double* tok = &enc.visual_tokens[(f * patches_ + p) * D];
      for (std::size_t r = 0; r < D; ++r) fm[r] += tok[r];
    }
    for (auto& x : fm) x /= static_cast<double>(patches_);
    out[f].assign(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < D; ++j) s += proj_[r * D + j] * fm[j];
      out[f][r] = s;
    }
    l2_normalize_inplace(out[f]);
  }
  return out;
}

double FrozenBackbone::similarity(const std::vector<double>& u, const std::vector<double>& v) {
  const double nu = norm(u), nv = norm(v);
  if (nu < 1e-12 || nv < 1e-12)
    throw DegenerateVectorError("similarity: vector norm below 1e-12");
  return dot(u, v) / (nu * nv);
}

NamedTensors FrozenBackbone::named_params() const {
  const std::size_t D = cfg_.embed_dim, d = cfg_.model_dim, m = state_dim_;
  NamedTensors out;
  out["backbone.obj_embed"] = Tensor::make({num_objects_, D}, obj_embed_);
  out["backbone.something_embed"] = Tensor::make({D}, something_embed_);
  out["backbone.action_embed"] = Tensor::make({action_names_.size(), D}, action_embed_);
  out["backbone.patch_proj"] = Tensor::make({patches_, D, m}, patch_proj_);
  out["backbone.patch_proj_heldout"] = Tensor::make({patches_, D, m}, patch_proj_heldout_);
  out["backbone.proj"] = Tensor::make({d, D}, proj_);
  return out;
}

std::uint64_t FrozenBackbone::params_hash() const { return tensors_hash(named_params()); }

}  // namespace paxl
