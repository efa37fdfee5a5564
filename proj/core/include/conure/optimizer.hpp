#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "conure/tensor.hpp"

namespace conure {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamSlot {
  Tensor m;
  Tensor v;
};

// Moments keyed by canonical tensor name; one shared step counter per phase.
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::map<std::string, AdamSlot> slots;

  AdamSlot& slot(const std::string& name, const std::vector<int>& shape);
  void reset() {
    step = 0;
    slots.clear();
  }
};

// One parameter participating in a step. mask = nullptr trains every cell;
// otherwise only cells with mask != 0 move — moments included — so frozen
// cells stay bit-identical no matter what the moments held before.
struct TrainableTensor {
  std::string name;
  Tensor* param = nullptr;
  const Tensor* mask = nullptr;
};

// Standard bias-corrected Adam over the given gradients. Tensors without a
// gradient entry are untouched. Shape mismatches are contract errors.
void adam_step(AdamState& state, const std::vector<TrainableTensor>& params,
               const std::map<std::string, Tensor>& grads, double lr);

}  // namespace conure
