#pragma once

#include <string>
#include <vector>

namespace paxl {

struct BatteryEntry {
  std::string op;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Central-difference verification of every differentiable operation: core
// tensor ops, both attention blocks, the similarity heads, all three losses,
// the fuser and the side-tune blend. Each op is checked at 5 seeded points
// with tolerance 1e-5. Attention blocks run at reduced dims here; the module
// test suites repeat them at full desk dims.
std::vector<BatteryEntry> run_grad_battery(double tol = 1e-5, double h = 1e-4);

std::string battery_tsv(const std::vector<BatteryEntry>& entries);
bool battery_passed(const std::vector<BatteryEntry>& entries);

}  // namespace paxl
