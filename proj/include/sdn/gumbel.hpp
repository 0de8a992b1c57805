#pragma once

#include <vector>

#include "sdn/rng.hpp"
#include "sdn/tensor.hpp"

namespace sdn {

// Stochastic switch bottleneck: perturbed logits pushed through a tempered
// softmax, with a hard one-hot path for evaluation.
struct GumbelConfig {
  int k = 2;             // number of switch states
  double tau0 = 5.0;     // starting temperature
  double decay = 0.985;  // per-epoch multiplicative decay
  double tau_min = 0.5;  // annealing floor
  bool straight_through = false;

  void validate() const;
};

// max(tau_min, tau0 * decay^epoch)
double gumbel_temperature(const GumbelConfig& cfg, int epoch);

// Constant tensor of iid standard Gumbel draws, row-major in shape order.
Tensor draw_gumbel_noise(Rng& rng, Shape shape);

// Soft sample y = softmax((logits + noise) / tau) along the last axis.
// With straight_through the forward value is the argmax one-hot while the
// backward pass sees the soft sample's Jacobian.
Tensor gumbel_softmax(const Tensor& logits, const Tensor& noise, double tau,
                      bool straight_through = false);

// Noise-free evaluation path: one-hot at each row's argmax (first index on
// ties). Constant tensor, detached from any graph.
Tensor hard_argmax_onehot(const Tensor& logits);

// Row argmax indices along the last axis, first index on ties.
std::vector<int> argmax_lastdim(const Tensor& x);

}  // namespace sdn
