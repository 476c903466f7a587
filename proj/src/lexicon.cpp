#include "paxl/lexicon.hpp"

#include <cmath>
#include <unordered_map>

namespace paxl {

std::string to_string(ActionKind k) {
  switch (k) {
    case ActionKind::kDirectional: return "directional";
    case ActionKind::kSymmetric: return "symmetric";
    case ActionKind::kStatic: return "static";
  }
  return "?";
}

ActionLexicon::ActionLexicon(std::vector<ActionEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].id != static_cast<int>(i))
      throw ConfigError("lexicon: entry ids must be dense and ordered");
    const auto& e = entries_[i];
    const bool has_ant = e.antonym_id.has_value();
    if ((e.kind == ActionKind::kDirectional) != has_ant)
      throw ConfigError("lexicon: '" + e.name +
                        "': directional actions must have an antonym, others must not");
    if (has_ant) {
      const int a = *e.antonym_id;
      if (a < 0 || a >= static_cast<int>(entries_.size()))
        throw ConfigError("lexicon: '" + e.name + "': antonym id out of range");
    }
  }
  // Antonymy must be a symmetric involution with negated directions.
  for (const auto& e : entries_) {
    if (!e.antonym_id) continue;
    const auto& a = entries_[static_cast<std::size_t>(*e.antonym_id)];
    if (!a.antonym_id || *a.antonym_id != e.id)
      throw ConfigError("lexicon: antonym mapping is not an involution at '" + e.name + "'");
    for (std::size_t c = 0; c < kPoseDim; ++c) {
      if (a.direction[c] != -e.direction[c])
        throw ConfigError("lexicon: antonym of '" + e.name +
                          "' must ramp along the negated direction");
    }
  }
}

const ActionEntry& ActionLexicon::entry(int action_id) const {
  if (action_id < 0 || action_id >= static_cast<int>(entries_.size()))
    throw IndexError("lexicon: unknown action id " + std::to_string(action_id));
  return entries_[static_cast<std::size_t>(action_id)];
}

const ActionEntry& ActionLexicon::by_name(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw IndexError("lexicon: unknown action name '" + name + "'");
}

std::optional<int> ActionLexicon::antonym_of(int action_id) const {
  return entry(action_id).antonym_id;
}

int ActionLexicon::base_class(int action_id) const {
  const auto& e = entry(action_id);
  if (e.antonym_id) return std::min(e.id, *e.antonym_id);
  return e.id;
}

namespace {

using Pose = std::array<double, kPoseDim>;

Pose normalized(Pose p) {
  double n = 0;
  for (double x : p) n += x * x;
  n = std::sqrt(n);
  for (auto& x : p) x /= n;
  return p;
}

ActionEntry directional(int id, std::string name, int antonym, Pose anchor, Pose dir,
                        std::size_t designated) {
  ActionEntry e;
  e.id = id;
  e.name = std::move(name);
  e.antonym_id = antonym;
  e.kind = ActionKind::kDirectional;
  e.anchor = anchor;
  e.direction = normalized(dir);
  e.designated_coord = designated;
  return e;
}

ActionEntry symmetric(int id, std::string name, Pose anchor, Pose axis, int periods) {
  ActionEntry e;
  e.id = id;
  e.name = std::move(name);
  e.kind = ActionKind::kSymmetric;
  e.anchor = anchor;
  e.direction = normalized(axis);
  e.oscillation_periods = periods;
  return e;
}

ActionEntry still(int id, std::string name, Pose anchor) {
  ActionEntry e;
  e.id = id;
  e.name = std::move(name);
  e.kind = ActionKind::kStatic;
  e.anchor = anchor;
  return e;
}

Pose neg(Pose p) {
  for (auto& x : p) x = -x;
  return p;
}

}  // namespace

ActionLexicon default_lexicon() {
  // Pose coordinates: 0 vertical, 1 horizontal, 2 size, 3 aperture, 4 velocity.
  // Each pair has its own anchor and ramp direction so trajectories of
  // distinct pairs are linearly distinguishable.
  std::vector<ActionEntry> e;
  const Pose a_fall{0.70, 0.30, 0.50, 0.40, 0.50};
  const Pose d_fall{-1.0, 0.0, 0.0, 0.0, -0.30};
  e.push_back(directional(0, "fall", 1, a_fall, d_fall, 0));
  e.push_back(directional(1, "rise", 0, a_fall, neg(d_fall), 0));

  const Pose a_grow{0.40, 0.60, 0.50, 0.55, 0.35};
  const Pose d_grow{0.0, 0.0, 1.0, 0.0, 0.25};
  e.push_back(directional(2, "grow", 3, a_grow, d_grow, 2));
  e.push_back(directional(3, "shrink", 2, a_grow, neg(d_grow), 2));

  const Pose a_approach{0.55, 0.45, 0.35, 0.60, 0.65};
  const Pose d_approach{0.0, -0.35, 0.70, 0.0, 0.62};
  e.push_back(directional(4, "approach", 5, a_approach, d_approach, 2));
  e.push_back(directional(5, "recede", 4, a_approach, neg(d_approach), 2));

  const Pose a_open{0.60, 0.55, 0.65, 0.35, 0.30};
  const Pose d_open{0.0, 0.0, 0.0, 1.0, 0.20};
  e.push_back(directional(6, "open", 7, a_open, d_open, 3));
  e.push_back(directional(7, "close", 6, a_open, neg(d_open), 3));

  const Pose a_push{0.35, 0.50, 0.60, 0.50, 0.60};
  const Pose d_push{0.0, -1.0, 0.0, 0.25, 0.0};
  e.push_back(directional(8, "push-left", 9, a_push, d_push, 1));
  e.push_back(directional(9, "push-right", 8, a_push, neg(d_push), 1));

  const Pose a_fill{0.45, 0.70, 0.55, 0.65, 0.40};
  const Pose d_fill{0.30, 0.0, 0.55, 0.75, 0.0};
  e.push_back(directional(10, "fill", 11, a_fill, d_fill, 3));
  e.push_back(directional(11, "empty", 10, a_fill, neg(d_fill), 3));

  const Pose a_attach{0.65, 0.65, 0.40, 0.45, 0.55};
  const Pose d_attach{0.60, 0.72, 0.0, -0.30, 0.0};
  e.push_back(directional(12, "attach", 13, a_attach, d_attach, 1));
  e.push_back(directional(13, "detach", 12, a_attach, neg(d_attach), 1));

  const Pose a_enter{0.50, 0.35, 0.70, 0.50, 0.45};
  const Pose d_enter{0.0, 0.62, -0.75, 0.0, 0.22};
  e.push_back(directional(14, "enter", 15, a_enter, d_enter, 2));
  e.push_back(directional(15, "exit", 14, a_enter, neg(d_enter), 2));

  const Pose a_lift{0.30, 0.55, 0.45, 0.60, 0.70};
  const Pose d_lift{0.78, 0.0, 0.20, 0.0, 0.59};
  e.push_back(directional(16, "lift", 17, a_lift, d_lift, 0));
  e.push_back(directional(17, "lower", 16, a_lift, neg(d_lift), 0));

  const Pose a_spin{0.55, 0.60, 0.60, 0.70, 0.35};
  const Pose d_spin{0.0, 0.28, 0.0, -0.55, 0.79};
  e.push_back(directional(18, "spin-cw", 19, a_spin, d_spin, 4));
  e.push_back(directional(19, "spin-ccw", 18, a_spin, neg(d_spin), 4));

  e.push_back(symmetric(20, "shake", {0.50, 0.40, 0.55, 0.50, 0.60},
                        {0.0, 1.0, 0.0, 0.0, 0.30}, 2));
  e.push_back(symmetric(21, "wiggle", {0.60, 0.50, 0.45, 0.55, 0.50},
                        {1.0, 0.30, 0.0, 0.0, 0.0}, 2));
  e.push_back(symmetric(22, "rotate-oscillate", {0.45, 0.55, 0.65, 0.45, 0.55},
                        {0.0, 0.0, 0.25, 1.0, 0.40}, 1));
  e.push_back(symmetric(23, "bounce-in-place", {0.40, 0.65, 0.50, 0.60, 0.40},
                        {1.0, 0.0, 0.20, 0.0, 0.45}, 1));

  e.push_back(still(24, "hold", {0.55, 0.50, 0.50, 0.50, 0.45}));
  e.push_back(still(25, "rest", {0.15, 0.60, 0.40, 0.35, 0.20}));
  return ActionLexicon(std::move(e));
}

std::vector<int> default_heldout_actions() { return {16, 17, 18, 19, 23, 25}; }

std::vector<int> default_train_actions() {
  std::vector<int> out;
  const auto held = default_heldout_actions();
  for (int id = 0; id < 26; ++id) {
    bool h = false;
    for (int x : held)
      if (x == id) h = true;
    if (!h) out.push_back(id);
  }
  return out;
}

}  // namespace paxl
