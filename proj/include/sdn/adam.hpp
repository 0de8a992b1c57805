#pragma once

#include <string>
#include <vector>

#include "sdn/tensor.hpp"

namespace sdn {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers, one pair per parameter block. The block list
// passed to adam_step must match the one used to create the state (same
// order, same shapes).
struct AdamState {
  AdamHyper hyper;
  long long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam_state(const std::vector<Tensor>& params,
                          const AdamHyper& hyper = {});

// Applies one bias-corrected update in place from each block's accumulated
// gradient, then leaves the gradients untouched (callers zero them).
// `names` is optional context for error messages.
void adam_step(std::vector<Tensor>& params, AdamState& state,
               const std::vector<std::string>& names = {});

}  // namespace sdn
