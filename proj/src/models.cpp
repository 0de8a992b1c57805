#include "sdn/models.hpp"

#include <cmath>

#include "sdn/errors.hpp"

namespace sdn {

namespace {

constexpr Block kAllBlocks[] = {Block::Kp, Block::Ki, Block::Kd, Block::Mu,
                                Block::LogVar};

void check_layer_finite(const Tensor& t, const std::string& who) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) {
      throw NumericError(who + " produced a non-finite activation");
    }
  }
}

Tensor xavier(Rng& rng, int fan_in, int fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor w = Tensor::zeros({fan_in, fan_out}, true);
  for (auto& v : w.data()) v = rng.uniform(-limit, limit);
  return w;
}

void init_trunk(Rng& rng, const TrunkConfig& cfg, std::vector<Tensor>& w,
                std::vector<Tensor>& b) {
  int in = cfg.input_dim;
  for (int width : cfg.hidden) {
    w.push_back(xavier(rng, in, width));
    b.push_back(Tensor::zeros({1, width}, true));
    in = width;
  }
}

void append_trunk_params(const std::vector<Tensor>& w,
                         const std::vector<Tensor>& b,
                         std::vector<Tensor>& out,
                         std::vector<std::string>* names) {
  for (size_t i = 0; i < w.size(); ++i) {
    out.push_back(w[i]);
    out.push_back(b[i]);
    if (names) {
      names->push_back("trunk.w" + std::to_string(i));
      names->push_back("trunk.b" + std::to_string(i));
    }
  }
}

}  // namespace

void TrunkConfig::validate() const {
  if (input_dim < 1) throw ConfigError("trunk: input_dim must be positive");
  if (hidden.empty()) throw ConfigError("trunk: at least one hidden layer");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("trunk: layer widths must be positive");
  }
  if (activation != "tanh" && activation != "relu") {
    throw ConfigError("trunk: unknown activation '" + activation + "'");
  }
}

std::string block_name(Block b) {
  switch (b) {
    case Block::Kp: return "kp";
    case Block::Ki: return "ki";
    case Block::Kd: return "kd";
    case Block::Mu: return "mu";
    case Block::LogVar: return "log_var";
  }
  throw ConfigError("head: unknown block kind");
}

Block block_from_name(const std::string& name) {
  for (Block b : kAllBlocks) {
    if (block_name(b) == name) return b;
  }
  throw ConfigError("head: unknown block name '" + name + "'");
}

void HeadSpec::validate() const {
  if (k < 1) throw ConfigError("head: k must be at least 1");
  if (layout.size() != 5) {
    throw ConfigError("head: layout must carry kp, ki, kd, mu and log_var");
  }
  bool any_learned = false;
  int gain_dim = -1;
  for (Block kind : kAllBlocks) {
    int found = 0;
    for (const auto& blk : layout) found += blk.kind == kind;
    if (found != 1) {
      throw ConfigError("head: block '" + block_name(kind) +
                        "' must appear exactly once");
    }
  }
  for (const auto& blk : layout) {
    if (blk.dim < 1) throw ConfigError("head: block dims must be positive");
    if (blk.learned) {
      any_learned = true;
    } else {
      if (static_cast<int>(blk.fixed.size()) != blk.dim) {
        throw ConfigError("head: fixed block '" + block_name(blk.kind) +
                          "' needs " + std::to_string(blk.dim) + " values");
      }
      for (double v : blk.fixed) {
        if (!std::isfinite(v)) {
          throw ConfigError("head: fixed block '" + block_name(blk.kind) +
                            "' carries a non-finite value");
        }
      }
    }
    if (blk.kind != Block::Mu) {
      if (gain_dim < 0) gain_dim = blk.dim;
      if (blk.dim != gain_dim) {
        throw ConfigError("head: kp/ki/kd/log_var must share one dimension");
      }
    }
  }
  if (!any_learned) throw ConfigError("head: at least one block must learn");
}

int HeadSpec::param_width() const {
  int p = 0;
  for (const auto& blk : layout) {
    if (blk.learned) p += blk.dim;
  }
  return p;
}

bool HeadSpec::has(Block kind) const {
  for (const auto& blk : layout) {
    if (blk.kind == kind) return true;
  }
  return false;
}

const ParamBlock& HeadSpec::block(Block kind) const {
  for (const auto& blk : layout) {
    if (blk.kind == kind) return blk;
  }
  throw ConfigError("head: block '" + block_name(kind) + "' absent");
}

int HeadSpec::learned_offset(Block kind) const {
  int off = 0;
  for (const auto& blk : layout) {
    if (blk.kind == kind) return blk.learned ? off : -1;
    if (blk.learned) off += blk.dim;
  }
  return -1;
}

HeadSpec make_gain_learning_head(int k, int dims,
                                 std::vector<double> fixed_mu) {
  HeadSpec h;
  h.k = k;
  h.layout = {
      {Block::Kp, dims, true, {}},
      {Block::Ki, dims, true, {}},
      {Block::Kd, dims, true, {}},
      {Block::Mu, static_cast<int>(fixed_mu.size()), false,
       std::move(fixed_mu)},
      {Block::LogVar, dims, true, {}},
  };
  h.validate();
  return h;
}

HeadSpec make_reference_learning_head(int k, int dims, double fixed_kp) {
  HeadSpec h;
  h.k = k;
  h.layout = {
      {Block::Kp, dims, false, std::vector<double>(dims, fixed_kp)},
      {Block::Ki, dims, false, std::vector<double>(dims, 0.0)},
      {Block::Kd, dims, false, std::vector<double>(dims, 0.0)},
      {Block::Mu, dims, true, {}},
      {Block::LogVar, dims, true, {}},
  };
  h.validate();
  return h;
}

std::vector<Tensor> SdnModel::parameters() const {
  std::vector<Tensor> out;
  append_trunk_params(layer_w, layer_b, out, nullptr);
  out.push_back(logit_w);
  out.push_back(logit_b);
  out.push_back(final_w);
  return out;
}

std::vector<std::string> SdnModel::parameter_names() const {
  std::vector<Tensor> unused;
  std::vector<std::string> names;
  append_trunk_params(layer_w, layer_b, unused, &names);
  names.insert(names.end(), {"logit.w", "logit.b", "final.w"});
  return names;
}

SdnModel init_sdn_model(const TrunkConfig& trunk, const HeadSpec& head,
                        const GumbelConfig& gumbel, uint64_t seed,
                        const std::vector<std::pair<double, double>>&
                            mu_init_range) {
  trunk.validate();
  head.validate();
  gumbel.validate();
  if (head.k != gumbel.k) {
    throw ConfigError("model: head k=" + std::to_string(head.k) +
                      " disagrees with switch k=" + std::to_string(gumbel.k));
  }
  const ParamBlock& mu = head.block(Block::Mu);
  if (mu.learned) {
    if (static_cast<int>(mu_init_range.size()) != mu.dim) {
      throw ConfigError("model: mu_init_range needs one [lo, hi] per "
                        "reference dimension");
    }
    for (const auto& [lo, hi] : mu_init_range) {
      if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
        throw ConfigError("model: mu_init_range entries must be finite with "
                          "lo <= hi");
      }
    }
  }

  Rng rng(seed);
  SdnModel m;
  m.trunk = trunk;
  m.head = head;
  m.gumbel = gumbel;
  m.rng_seed = seed;
  init_trunk(rng, trunk, m.layer_w, m.layer_b);
  const int feat = trunk.hidden.back();
  m.logit_w = xavier(rng, feat, head.k);
  m.logit_b = Tensor::zeros({1, head.k}, true);

  // The final table: gains start small and positive, references start at the
  // midpoints of K equal strata of their range, log variances start at 0.
  m.final_w = Tensor::zeros({head.k, head.param_width()}, true);
  auto& w = m.final_w.data();
  const int p = head.param_width();
  int off = 0;
  for (const auto& blk : head.layout) {
    if (!blk.learned) continue;
    for (int i = 0; i < head.k; ++i) {
      for (int d = 0; d < blk.dim; ++d) {
        double v = 0.0;
        switch (blk.kind) {
          case Block::Kp:
          case Block::Ki:
          case Block::Kd:
            v = rng.uniform(0.01, 0.1);
            break;
          case Block::Mu: {
            const auto& [lo, hi] = mu_init_range[d];
            v = lo + (2.0 * i + 1.0) * (hi - lo) / (2.0 * head.k);
            break;
          }
          case Block::LogVar:
            v = 0.0;
            break;
        }
        w[static_cast<size_t>(i) * p + off + d] = v;
      }
    }
    off += blk.dim;
  }
  return m;
}

Tensor trunk_features(const TrunkConfig& cfg,
                      const std::vector<Tensor>& layer_w,
                      const std::vector<Tensor>& layer_b, const Tensor& z) {
  if (z.rank() != 2 || z.cols() != cfg.input_dim) {
    throw ShapeError("trunk: observations " + shape_str(z.shape()) +
                     " do not match input_dim " +
                     std::to_string(cfg.input_dim));
  }
  Tensor h = z;
  for (size_t i = 0; i < layer_w.size(); ++i) {
    Tensor pre = add(matmul(h, layer_w[i]), layer_b[i]);
    h = cfg.activation == "tanh" ? tanh(pre) : relu(pre);
    check_layer_finite(h, "trunk layer " + std::to_string(i));
  }
  return h;
}

namespace {

Tensor sdn_logits(const SdnModel& m, const Tensor& z) {
  Tensor feats = trunk_features(m.trunk, m.layer_w, m.layer_b, z);
  Tensor logits = add(matmul(feats, m.logit_w), m.logit_b);
  check_layer_finite(logits, "switch logit layer");
  return logits;
}

}  // namespace

SdnOutput sdn_forward_train(const SdnModel& m, const Tensor& z, double tau,
                            const Tensor& noise) {
  Tensor logits = sdn_logits(m, z);
  Tensor y = gumbel_softmax(logits, noise, tau, m.gumbel.straight_through);
  return {logits, y, matmul(y, m.final_w)};
}

SdnOutput sdn_forward_train(const SdnModel& m, const Tensor& z, double tau,
                            Rng& rng) {
  Tensor logits = sdn_logits(m, z);
  Tensor noise = draw_gumbel_noise(rng, logits.shape());
  Tensor y = gumbel_softmax(logits, noise, tau, m.gumbel.straight_through);
  return {logits, y, matmul(y, m.final_w)};
}

SdnOutput sdn_forward_eval(const SdnModel& m, const Tensor& z) {
  Tensor logits = sdn_logits(m, z);
  Tensor y = hard_argmax_onehot(logits);
  // One-hot rows copy the selected table row bit-exactly through the
  // bias-free product.
  return {logits, y, matmul(y, m.final_w)};
}

namespace {

Tensor block_tensor(const HeadSpec& head, const Tensor& params, Block kind) {
  const ParamBlock& blk = head.block(kind);
  if (!blk.learned) return Tensor::row(blk.fixed);
  const int off = head.learned_offset(kind);
  return slice_lastdim(params, off, off + blk.dim);
}

// Rewrites log variances so sigma^2 = kVarianceFloor + exp(lv). Smooth in
// lv, so a floored mode keeps a live gradient and can grow its variance
// back when the switch reassigns samples to it.
Tensor floor_log_var(const Tensor& lv) {
  const Tensor floor =
      Tensor::row(std::vector<double>(lv.cols(), kVarianceFloor));
  return log(add(exp(lv), floor));
}

}  // namespace

DecodedBlocks decode_blocks(const HeadSpec& head, const Tensor& params) {
  if (params.cols() != head.param_width()) {
    throw ShapeError("head: params " + shape_str(params.shape()) +
                     " do not match learned width " +
                     std::to_string(head.param_width()));
  }
  return {block_tensor(head, params, Block::Kp),
          block_tensor(head, params, Block::Ki),
          block_tensor(head, params, Block::Kd),
          block_tensor(head, params, Block::Mu),
          floor_log_var(block_tensor(head, params, Block::LogVar))};
}

PidParams decode_mode_params(const HeadSpec& head,
                             const std::vector<double>& row, int mode_id) {
  if (static_cast<int>(row.size()) != head.param_width()) {
    throw ShapeError("head: parameter row has " + std::to_string(row.size()) +
                     " entries, expected " +
                     std::to_string(head.param_width()));
  }
  PidParams p;
  p.mode_id = mode_id;
  for (const auto& blk : head.layout) {
    std::vector<double> vals;
    if (blk.learned) {
      const int off = head.learned_offset(blk.kind);
      vals.assign(row.begin() + off, row.begin() + off + blk.dim);
    } else {
      vals = blk.fixed;
    }
    switch (blk.kind) {
      case Block::Kp: p.kp = std::move(vals); break;
      case Block::Ki: p.ki = std::move(vals); break;
      case Block::Kd: p.kd = std::move(vals); break;
      case Block::Mu: p.mu = std::move(vals); break;
      case Block::LogVar:
        p.sigma_diag.resize(vals.size());
        for (size_t i = 0; i < vals.size(); ++i)
          p.sigma_diag[i] = kVarianceFloor + std::exp(vals[i]);
        break;
    }
  }
  p.validate();
  return p;
}

std::vector<PidParams> extract_hybrid_system(const SdnModel& m) {
  const int p = m.head.param_width();
  std::vector<PidParams> modes;
  modes.reserve(m.head.k);
  for (int i = 0; i < m.head.k; ++i) {
    const auto& w = m.final_w.data();
    std::vector<double> row(w.begin() + static_cast<size_t>(i) * p,
                            w.begin() + static_cast<size_t>(i + 1) * p);
    modes.push_back(decode_mode_params(m.head, row, i));
  }
  return modes;
}

std::vector<Tensor> MdnModel::parameters() const {
  std::vector<Tensor> out;
  append_trunk_params(layer_w, layer_b, out, nullptr);
  out.insert(out.end(),
             {mean_w, mean_b, log_var_w, log_var_b, weight_w, weight_b});
  return out;
}

std::vector<std::string> MdnModel::parameter_names() const {
  std::vector<Tensor> unused;
  std::vector<std::string> names;
  append_trunk_params(layer_w, layer_b, unused, &names);
  names.insert(names.end(), {"mean.w", "mean.b", "log_var.w", "log_var.b",
                             "weight.w", "weight.b"});
  return names;
}

MdnModel init_mdn_model(const TrunkConfig& trunk, int k, int out_dim,
                        uint64_t seed) {
  trunk.validate();
  if (k < 1) throw ConfigError("mdn: k must be at least 1");
  if (out_dim < 1) throw ConfigError("mdn: out_dim must be positive");
  Rng rng(seed);
  MdnModel m;
  m.trunk = trunk;
  m.k = k;
  m.out_dim = out_dim;
  m.rng_seed = seed;
  init_trunk(rng, trunk, m.layer_w, m.layer_b);
  const int feat = trunk.hidden.back();
  m.mean_w = xavier(rng, feat, k * out_dim);
  m.mean_b = Tensor::zeros({1, k * out_dim}, true);
  m.log_var_w = xavier(rng, feat, k * out_dim);
  m.log_var_b = Tensor::zeros({1, k * out_dim}, true);
  m.weight_w = xavier(rng, feat, k);
  m.weight_b = Tensor::zeros({1, k}, true);
  return m;
}

MdnOutput mdn_forward(const MdnModel& m, const Tensor& z) {
  Tensor feats = trunk_features(m.trunk, m.layer_w, m.layer_b, z);
  Tensor means = add(matmul(feats, m.mean_w), m.mean_b);
  check_layer_finite(means, "mixture mean head");
  Tensor log_vars = add(matmul(feats, m.log_var_w), m.log_var_b);
  check_layer_finite(log_vars, "mixture log-variance head");
  Tensor weight_logits = add(matmul(feats, m.weight_w), m.weight_b);
  check_layer_finite(weight_logits, "mixture weight head");
  return {weight_logits, softmax_lastdim(weight_logits), means,
          floor_log_var(log_vars)};
}

std::vector<Tensor> RegressorModel::parameters() const {
  std::vector<Tensor> out;
  append_trunk_params(layer_w, layer_b, out, nullptr);
  out.insert(out.end(), {out_w, out_b, log_var});
  return out;
}

std::vector<std::string> RegressorModel::parameter_names() const {
  std::vector<Tensor> unused;
  std::vector<std::string> names;
  append_trunk_params(layer_w, layer_b, unused, &names);
  names.insert(names.end(), {"out.w", "out.b", "log_var"});
  return names;
}

RegressorModel init_regressor_model(const TrunkConfig& trunk, int out_dim,
                                    uint64_t seed) {
  trunk.validate();
  if (out_dim < 1) throw ConfigError("regressor: out_dim must be positive");
  Rng rng(seed);
  RegressorModel m;
  m.trunk = trunk;
  m.out_dim = out_dim;
  m.rng_seed = seed;
  init_trunk(rng, trunk, m.layer_w, m.layer_b);
  m.out_w = xavier(rng, trunk.hidden.back(), out_dim);
  m.out_b = Tensor::zeros({1, out_dim}, true);
  m.log_var = Tensor::zeros({1, out_dim}, true);
  return m;
}

RegressorOutput regressor_forward(const RegressorModel& m, const Tensor& z) {
  Tensor feats = trunk_features(m.trunk, m.layer_w, m.layer_b, z);
  Tensor mean = add(matmul(feats, m.out_w), m.out_b);
  check_layer_finite(mean, "action head");
  return {mean, floor_log_var(m.log_var)};
}

}  // namespace sdn
