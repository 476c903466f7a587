#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "paxl/training.hpp"

namespace paxl {

// A video feature is either a token matrix (patcher paths) or a single
// vector (pooled / fused / blended paths); rows==1 means vector.
struct VideoFeat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;
};

// Frozen scoring bundle for evaluation: all closures are pure and never
// mutate parameters.
struct ModelUnderTest {
  std::string tag;
  std::function<VideoFeat(const ClipInstance&)> video;
  std::function<std::vector<double>(const std::vector<std::string>&)> text;
  std::function<double(const VideoFeat&, const std::vector<double>&)> score;
};

ModelUnderTest make_backbone_model(const FrozenBackbone& backbone);
// Patcher-only model with the variant's own similarity head.
ModelUnderTest make_patcher_model(const FrozenBackbone& backbone, const ModelBundle& bundle,
                                  std::string tag = "patcher");
ModelUnderTest make_fused_model(const FrozenBackbone& backbone, const ModelBundle& bundle,
                                std::string tag = "fused");
ModelUnderTest make_sidetuned_model(const FrozenBackbone& backbone, const ModelBundle& bundle,
                                    std::string tag = "sidetuned");

// Binary probe accuracies over the eval split with 0.5 credit for exact
// ties. Antonym and reversal probes exist on directional rows only; the
// object-replacement probe on every row.
double score_aa(const ModelUnderTest& model, const Dataset& dataset);
double score_vr(const ModelUnderTest& model, const Dataset& dataset);
double score_or(const ModelUnderTest& model, const Dataset& dataset);

enum class RetrievalTask { kFull, kTemplate, kTemporal };

std::string to_string(RetrievalTask t);

struct RetrievalResult {
  // recall[k] per requested k, video-to-text direction.
  std::vector<std::pair<std::size_t, double>> v2t;
  // text-to-video (full task only): a text query counts as recalled when any
  // clip bearing that annotation ranks in the top k.
  std::vector<std::pair<std::size_t, double>> t2v;
  std::size_t pool_size = 0;
};

// Candidate pool: all distinct annotations of the task's form in the split.
// full = object+action annotations, both directions; template = the
// object-obscured forms; temporal = object-obscured forms restricted to
// directional actions (queries restricted likewise).
RetrievalResult eval_retrieval(const ModelUnderTest& model, const World& world,
                               const std::vector<ClipInstance>& split, RetrievalTask task,
                               const std::vector<std::size_t>& ks);

// Zero-shot action classification over candidate texts; each path softmaxes
// its similarity scores at the given temperature. With an ensemble partner
// the prediction is the argmax of the summed probability vectors.
double zero_shot_classify(const ModelUnderTest& model, const ModelUnderTest* ensemble_partner,
                          const std::vector<ClipInstance>& clips,
                          const std::vector<std::vector<std::string>>& candidate_texts,
                          const std::vector<int>& candidate_action_ids, double temperature);

struct ReportRow {
  std::string model_tag;
  std::string task;
  std::string metric;
  double value;
  std::size_t n;
  std::uint64_t seed;
  std::string config_fp;
};

struct EvalReport {
  std::vector<ReportRow> rows;

  std::string to_tsv() const;
  std::string to_markdown() const;
};

EvalReport parse_report_tsv(const std::string& tsv);

// Fixed-point with 3 decimals, half-up.
std::string format_metric(double value);

}  // namespace paxl
