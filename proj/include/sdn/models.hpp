#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sdn/control.hpp"
#include "sdn/gumbel.hpp"
#include "sdn/rng.hpp"
#include "sdn/tensor.hpp"

namespace sdn {

struct TrunkConfig {
  int input_dim = 0;
  std::vector<int> hidden;
  std::string activation = "tanh";  // or "relu"

  void validate() const;
};

enum class Block { Kp, Ki, Kd, Mu, LogVar };

std::string block_name(Block b);
Block block_from_name(const std::string& name);

// One slot of the per-mode parameter vector: either read from the final
// weight matrix (learned) or substituted from a constant (fixed).
struct ParamBlock {
  Block kind = Block::Kp;
  int dim = 0;
  bool learned = true;
  std::vector<double> fixed;  // length dim when not learned
};

// Layout of the per-mode parameter vector, in decode order.
struct HeadSpec {
  int k = 2;
  std::vector<ParamBlock> layout;

  void validate() const;
  int param_width() const;  // learned width P
  bool has(Block kind) const;
  const ParamBlock& block(Block kind) const;
  // Column offset of a learned block inside the width-P vector, -1 if the
  // block is fixed or absent.
  int learned_offset(Block kind) const;
};

// Head where the gains are learned per mode and the reference is pinned:
// kp/ki/kd learned (dim each), mu fixed, log_var learned.
HeadSpec make_gain_learning_head(int k, int dims, std::vector<double> fixed_mu);

// Head where a known proportional controller reaches learned references:
// kp fixed at fixed_kp per dim, ki/kd fixed at zero, mu and log_var learned.
HeadSpec make_reference_learning_head(int k, int dims, double fixed_kp);

// Switching network: trunk -> K logits -> Gumbel-softmax switch y ->
// bias-free K x P layer whose rows are the per-mode parameter sets.
struct SdnModel {
  TrunkConfig trunk;
  HeadSpec head;
  GumbelConfig gumbel;
  std::vector<Tensor> layer_w;
  std::vector<Tensor> layer_b;
  Tensor logit_w;
  Tensor logit_b;
  Tensor final_w;  // K x P, deliberately bias-free
  uint64_t rng_seed = 0;

  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names() const;
};

// mu_init_range: one [lo, hi] per reference dimension; the K modes start at
// the midpoints of K equal strata of each range. Required only when the mu
// block is learned.
SdnModel init_sdn_model(const TrunkConfig& trunk, const HeadSpec& head,
                        const GumbelConfig& gumbel, uint64_t seed,
                        const std::vector<std::pair<double, double>>&
                            mu_init_range = {});

struct SdnOutput {
  Tensor logits;    // B x K
  Tensor switch_y;  // B x K rows on the simplex (one-hot in eval)
  Tensor params;    // B x P decoded learned parameters, y W
};

// Shared trunk evaluation; throws NumericError naming the layer if any
// activation goes non-finite.
Tensor trunk_features(const TrunkConfig& cfg,
                      const std::vector<Tensor>& layer_w,
                      const std::vector<Tensor>& layer_b, const Tensor& z);

// Train path: caller supplies the Gumbel noise (shape B x K) so runs are
// reproducible and gradient checks can freeze it.
SdnOutput sdn_forward_train(const SdnModel& m, const Tensor& z, double tau,
                            const Tensor& noise);
// Convenience wrapper that draws the noise from rng.
SdnOutput sdn_forward_train(const SdnModel& m, const Tensor& z, double tau,
                            Rng& rng);
// Eval path: noise-free hard argmax switch.
SdnOutput sdn_forward_eval(const SdnModel& m, const Tensor& z);

// Decoded variances carry an additive floor: sigma^2 = kVarianceFloor +
// exp(log_var). Demonstrations are noise-free, so without the floor a mode
// that captures an exactly-representable slice of the data can shrink its
// variance without bound, and that one descent direction starves every
// other mode of gradient. The floor also sets the resolution below which
// residual structure is treated as noise: torque saturation leaves the
// demonstrator's gain laws with residuals of a few tenths, and a floor of
// sigma = 0.2 lets a mode own its occasional saturated samples instead of
// shedding them into a catch-all mode. The floor is applied wherever
// log_var is decoded (SDN, MDN, regressor), never inside the loss formulas
// themselves.
inline constexpr double kVarianceFloor = 4e-2;

// The five parameter blocks as tensors ready for the batched control law.
// Learned blocks are (B, dim) slices of params; fixed blocks are (1, dim)
// constants that broadcast over the batch. log_var is already floored.
struct DecodedBlocks {
  Tensor kp, ki, kd, mu, log_var;
};
DecodedBlocks decode_blocks(const HeadSpec& head, const Tensor& params);

// Numeric decode of one parameter row (length P) into a ready-to-run
// control law; sigma_diag = kVarianceFloor + exp(log_var).
PidParams decode_mode_params(const HeadSpec& head,
                             const std::vector<double>& row, int mode_id);

//  The identified hybrid system: one PidParams per mode, row i of the final
//  weight matrix plus the fixed blocks. Independent of any observation.
std::vector<PidParams> extract_hybrid_system(const SdnModel& m);

// Mixture baseline: trunk -> per-component action means, log variances, and
// mixture weight logits.
struct MdnModel {
  TrunkConfig trunk;
  int k = 2;
  int out_dim = 1;
  std::vector<Tensor> layer_w;
  std::vector<Tensor> layer_b;
  Tensor mean_w, mean_b;        // features -> K * out_dim
  Tensor log_var_w, log_var_b;  // features -> K * out_dim
  Tensor weight_w, weight_b;    // features -> K
  uint64_t rng_seed = 0;

  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names() const;
};

MdnModel init_mdn_model(const TrunkConfig& trunk, int k, int out_dim,
                        uint64_t seed);

struct MdnOutput {
  Tensor weight_logits;  // B x K
  Tensor weights;        // B x K, softmax of the logits
  Tensor means;          // B x (K * out_dim), component-major
  Tensor log_vars;       // B x (K * out_dim)
};

MdnOutput mdn_forward(const MdnModel& m, const Tensor& z);

// Plain Gaussian regressor baseline: trunk -> action mean, with one learned
// constant log-variance vector shared across inputs.
struct RegressorModel {
  TrunkConfig trunk;
  int out_dim = 1;
  std::vector<Tensor> layer_w;
  std::vector<Tensor> layer_b;
  Tensor out_w, out_b;  // features -> out_dim
  Tensor log_var;       // 1 x out_dim
  uint64_t rng_seed = 0;

  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names() const;
};

RegressorModel init_regressor_model(const TrunkConfig& trunk, int out_dim,
                                    uint64_t seed);

struct RegressorOutput {
  Tensor mean;     // B x out_dim
  Tensor log_var;  // 1 x out_dim, broadcasts over the batch
};

RegressorOutput regressor_forward(const RegressorModel& m, const Tensor& z);

}  // namespace sdn
