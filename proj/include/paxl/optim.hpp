#pragma once

#include <string>
#include <vector>

#include "paxl/tensor.hpp"

namespace paxl {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Optimizer presets. "desk" is the default: small synthetic models converge
// in minutes only at the larger learning rate. "paper" keeps the reference
// recipe (lr 1e-5, weight decay 0.05).
AdamWConfig adamw_preset(const std::string& name);

// AdamW with decoupled weight decay:
//   t += 1; m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g^2
//   mhat = m/(1-b1^t); vhat = v/(1-b2^t)
//   theta -= lr*mhat/(sqrt(vhat)+eps) + lr*wd*theta
class AdamW {
 public:
  AdamW(std::vector<TensorPtr> params, AdamWConfig cfg);

  // Consumes the gradients currently stored on the parameters.
  void step();
  void zero_grad();

  long long step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<TensorPtr> params_;
  AdamWConfig cfg_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace paxl
