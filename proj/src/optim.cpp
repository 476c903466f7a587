#include "paxl/optim.hpp"

#include <cmath>

#include "paxl/errors.hpp"

namespace paxl {

AdamWConfig adamw_preset(const std::string& name) {
  if (name == "desk") return AdamWConfig{1e-3, 0.9, 0.999, 1e-8, 0.01};
  if (name == "paper") return AdamWConfig{1e-5, 0.9, 0.999, 1e-8, 0.05};
  throw ConfigError("optim.preset: unknown preset '" + name + "' (expected desk or paper)");
}

AdamW::AdamW(std::vector<TensorPtr> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = *params_[k];
    if (p.grad.size() != p.values.size())
      throw ShapeError("adamw: parameter gradient missing or mismatched");
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      // Both the Adam step and the decay term use the pre-update value.
      const double theta = p.values[i];
      p.values[i] = theta - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps) -
                    cfg_.lr * cfg_.weight_decay * theta;
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

}  // namespace paxl
