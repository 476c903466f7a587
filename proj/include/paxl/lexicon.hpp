#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "paxl/errors.hpp"

namespace paxl {

// Number of continuous pose coordinates in a frame state:
// vertical, horizontal, size, aperture, velocity trace.
inline constexpr std::size_t kPoseDim = 5;

enum class ActionKind { kDirectional, kSymmetric, kStatic };

std::string to_string(ActionKind k);

// Trajectory recipe for one action. Directional actions ramp linearly along
// `direction` (antonyms use the negated direction, which makes the antonym
// trajectory exactly the time reversal of the original). Symmetric actions
// oscillate evenly around the anchor, so the frame sequence equals its own
// reversal. Static actions sit at the anchor.
struct ActionEntry {
  int id = -1;
  std::string name;
  std::optional<int> antonym_id;  // directional only
  ActionKind kind = ActionKind::kStatic;
  std::array<double, kPoseDim> anchor{};     // shared by both members of a pair
  std::array<double, kPoseDim> direction{};  // ramp (directional) or oscillation axis
  std::size_t designated_coord = 0;          // strictly monotone coordinate (directional)
  int oscillation_periods = 0;               // symmetric only; must divide frame count
};

class ActionLexicon {
 public:
  explicit ActionLexicon(std::vector<ActionEntry> entries);

  const ActionEntry& entry(int action_id) const;
  const ActionEntry& by_name(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  const std::vector<ActionEntry>& entries() const { return entries_; }

  // Paired id for directional actions; empty for symmetric/static.
  std::optional<int> antonym_of(int action_id) const;

  // Both pair members share a base class id (= min id of the pair); used for
  // anchor lookup and pair-level bookkeeping.
  int base_class(int action_id) const;

 private:
  std::vector<ActionEntry> entries_;
};

// The default 26-action lexicon: 10 directional antonym pairs, 4 symmetric
// actions, 2 static actions.
ActionLexicon default_lexicon();

// Action ids reserved for the held-out domain split (2 directional pairs,
// 1 symmetric, 1 static); the remaining 20 actions form the train/eval set.
std::vector<int> default_heldout_actions();
std::vector<int> default_train_actions();

}  // namespace paxl
