#include "eegstate/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace eegstate {

double WarmupCosine::at(double e) const {
  if (e < warmup_epochs) return peak * e / warmup_epochs;
  const double span = total_epochs - warmup_epochs;
  if (span <= 0.0) return min;
  const double progress = std::clamp((e - warmup_epochs) / span, 0.0, 1.0);
  return min + 0.5 * (peak - min) * (1.0 + std::cos(std::numbers::pi * progress));
}

double CosineAnnealing::at(double e) const {
  const double progress = period > 0.0 ? std::clamp(e / period, 0.0, 1.0) : 1.0;
  return min + 0.5 * (base - min) * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_grad_norm(const nn::ParamList& params, double max_norm) {
  const double norm = nn::global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (nn::Param* p : params) p->grad *= s;
  }
  return norm;
}

void AdamW::step(const nn::ParamList& params, double lr) {
  for (nn::Param* p : params) {
    auto& slot = slots_[p->name];
    if (slot.m.size() != p->value.size()) {
      slot.m = Matrix::Zero(p->value.rows(), p->value.cols());
      slot.v = Matrix::Zero(p->value.rows(), p->value.cols());
      slot.steps = 0;
    }
    ++slot.steps;
    slot.m = cfg_.beta1 * slot.m + (1.0 - cfg_.beta1) * p->grad;
    slot.v = cfg_.beta2 * slot.v + (1.0 - cfg_.beta2) * p->grad.cwiseProduct(p->grad);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(slot.steps));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(slot.steps));
    if (p->decay && cfg_.weight_decay != 0.0) p->value *= (1.0 - lr * cfg_.weight_decay);
    p->value.array() -=
        lr * (slot.m.array() / bc1) / ((slot.v.array() / bc2).sqrt() + cfg_.eps);
  }
}

}  // namespace eegstate
