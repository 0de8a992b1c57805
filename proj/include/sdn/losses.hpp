#pragma once

#include <vector>

#include "sdn/models.hpp"
#include "sdn/tensor.hpp"

namespace sdn {

// Per-sample diagonal-Gaussian negative log likelihood,
//   1/2 * sum_d [(u_d - uhat_d)^2 / var_d + ln var_d + ln 2pi],
// parameterized by log variance so gradients stay finite for any value.
// u and u_hat are (B, D); log_var is (B, D) or a broadcast (1, D) row.
// Returns (B, 1).
Tensor gaussian_nll(const Tensor& u, const Tensor& u_hat,
                    const Tensor& log_var);

// Same density evaluated on plain doubles (test oracle and reporting).
// Throws NumericError unless every variance is positive.
double gaussian_nll_value(const std::vector<double>& u,
                          const std::vector<double>& u_hat,
                          const std::vector<double>& sigma_sq);

// Mixture NLL, -logsumexp_i [ln pi_i + ln N(u | mu_i, var_i)], per sample.
// u is (B, D); the mixture comes straight from mdn_forward. Returns (B, 1).
Tensor mdn_nll(const Tensor& u, const MdnOutput& mix);

// Batch regularizer on switch activations: with y_bar the column mean of
// the (B, K) simplex rows (clamped >= 1e-12), returns
// -(1/K) * sum_i ln y_bar_i. Minimized at ln K by a uniform y_bar, so it
// punishes batches that concentrate on few switch states.
Tensor ce_regularizer(const Tensor& switch_batch);

}  // namespace sdn
