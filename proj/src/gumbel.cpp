#include "sdn/gumbel.hpp"

#include <cmath>

#include "sdn/errors.hpp"

namespace sdn {

void GumbelConfig::validate() const {
  if (k < 1) throw ConfigError("gumbel: k must be at least 1");
  if (tau_min <= 0.0) throw ConfigError("gumbel: tau_min must be positive");
  if (tau0 < tau_min) throw ConfigError("gumbel: tau0 must be >= tau_min");
  if (decay <= 0.0 || decay > 1.0) {
    throw ConfigError("gumbel: decay must be in (0, 1]");
  }
}

double gumbel_temperature(const GumbelConfig& cfg, int epoch) {
  cfg.validate();
  if (epoch < 0) throw ConfigError("gumbel: epoch must be non-negative");
  return std::max(cfg.tau_min, cfg.tau0 * std::pow(cfg.decay, epoch));
}

Tensor draw_gumbel_noise(Rng& rng, Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = rng.gumbel();
  return t;
}

Tensor gumbel_softmax(const Tensor& logits, const Tensor& noise, double tau,
                      bool straight_through) {
  if (logits.shape() != noise.shape()) {
    throw ShapeError("gumbel: logits " + shape_str(logits.shape()) +
                     " and noise " + shape_str(noise.shape()) + " differ");
  }
  if (tau <= 0.0) throw ConfigError("gumbel: tau must be positive");
  Tensor y = softmax_lastdim(scale(add(logits, noise), 1.0 / tau));
  if (!straight_through) return y;
  // Forward becomes the hard one-hot by adding a constant correction, so the
  // backward pass still flows through the soft sample.
  Tensor hard = hard_argmax_onehot(y);
  std::vector<double> delta(y.data().size());
  for (size_t i = 0; i < delta.size(); ++i) delta[i] = hard[i] - y[i];
  return add(y, Tensor::from_data(y.shape(), std::move(delta)));
}

Tensor hard_argmax_onehot(const Tensor& logits) {
  const int cols = logits.cols();
  const int rows = logits.rows();
  std::vector<double> out(logits.data().size(), 0.0);
  const auto idx = argmax_lastdim(logits);
  for (int r = 0; r < rows; ++r)
    out[static_cast<size_t>(r) * cols + idx[r]] = 1.0;
  return Tensor::from_data(logits.shape(), std::move(out));
}

std::vector<int> argmax_lastdim(const Tensor& x) {
  const int cols = x.cols();
  const int rows = x.rows();
  std::vector<int> idx(rows, 0);
  const auto& d = x.data();
  for (int r = 0; r < rows; ++r) {
    const double* row = &d[static_cast<size_t>(r) * cols];
    for (int c = 1; c < cols; ++c) {
      if (row[c] > row[idx[r]]) idx[r] = c;
    }
  }
  return idx;
}

}  // namespace sdn
