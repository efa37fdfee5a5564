#include "conure/optimizer.hpp"

#include <cmath>

#include "conure/errors.hpp"

namespace conure {

AdamSlot& AdamState::slot(const std::string& name, const std::vector<int>& shape) {
  auto it = slots.find(name);
  if (it == slots.end()) {
    it = slots.emplace(name, AdamSlot{Tensor::zeros(shape), Tensor::zeros(shape)}).first;
  }
  if (it->second.m.shape != shape) {
    throw ContractError("adam slot '" + name + "' shape changed");
  }
  return it->second;
}

void adam_step(AdamState& state, const std::vector<TrainableTensor>& params,
               const std::map<std::string, Tensor>& grads, double lr) {
  state.step += 1;
  const AdamConfig& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (const TrainableTensor& p : params) {
    auto git = grads.find(p.name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    if (g.shape != p.param->shape) {
      throw ContractError("gradient shape mismatch for '" + p.name + "'");
    }
    if (p.mask != nullptr && p.mask->shape != p.param->shape) {
      throw ContractError("mask shape mismatch for '" + p.name + "'");
    }
    AdamSlot& slot = state.slot(p.name, p.param->shape);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      if (p.mask != nullptr && p.mask->data[i] == 0.0) continue;
      double& m = slot.m.data[i];
      double& v = slot.v.data[i];
      m = c.beta1 * m + (1.0 - c.beta1) * g.data[i];
      v = c.beta2 * v + (1.0 - c.beta2) * g.data[i] * g.data[i];
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p.param->data[i] -= lr * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

}  // namespace conure
