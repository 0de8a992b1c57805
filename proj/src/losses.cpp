#include "sdn/losses.hpp"

#include <cmath>

#include "sdn/errors.hpp"

namespace sdn {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// (B, D) -> (B, 1) row sums, expressed as a matmul so the existing ops
// carry the gradient.
Tensor rowsum(const Tensor& x) {
  return matmul(x, Tensor::full({x.cols(), 1}, 1.0));
}

void check_same_cols(const Tensor& a, const Tensor& b, const char* who) {
  if (a.cols() != b.cols()) {
    throw ShapeError(std::string(who) + ": column mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor gaussian_nll(const Tensor& u, const Tensor& u_hat,
                    const Tensor& log_var) {
  if (u.shape() != u_hat.shape()) {
    throw ShapeError("gaussian_nll: u is " + shape_str(u.shape()) +
                     " but u_hat is " + shape_str(u_hat.shape()));
  }
  check_same_cols(u, log_var, "gaussian_nll");

  const Tensor r = sub(u, u_hat);
  const Tensor precision = exp(scale(log_var, -1.0));
  const Tensor quad = mul(mul(r, r), precision);
  // lv may be a single broadcast row; summing after the add keeps the
  // per-sample shape right either way.
  const Tensor per_dim = add(quad, log_var);
  const Tensor half = scale(rowsum(per_dim), 0.5);
  return add(half, Tensor::full({1, 1}, 0.5 * kLog2Pi * u.cols()));
}

double gaussian_nll_value(const std::vector<double>& u,
                          const std::vector<double>& u_hat,
                          const std::vector<double>& sigma_sq) {
  if (u.size() != u_hat.size() || u.size() != sigma_sq.size()) {
    throw ShapeError("gaussian_nll: dimension mismatch");
  }
  double acc = 0.0;
  for (size_t d = 0; d < u.size(); ++d) {
    if (!(sigma_sq[d] > 0.0)) {
      throw NumericError("gaussian_nll: variance must be positive");
    }
    const double r = u[d] - u_hat[d];
    acc += r * r / sigma_sq[d] + std::log(sigma_sq[d]) + kLog2Pi;
  }
  return 0.5 * acc;
}

Tensor mdn_nll(const Tensor& u, const MdnOutput& mix) {
  const int k = mix.weight_logits.cols();
  const int d = u.cols();
  if (mix.means.cols() != k * d) {
    throw ShapeError("mdn_nll: mixture has " +
                     std::to_string(mix.means.cols() / d) +
                     " components of the wrong width for u " +
                     shape_str(u.shape()));
  }

  const Tensor log_pi =
      sub(mix.weight_logits, logsumexp_lastdim(mix.weight_logits));

  std::vector<Tensor> cols;
  cols.reserve(k);
  for (int i = 0; i < k; ++i) {
    const Tensor mu = slice_lastdim(mix.means, i * d, (i + 1) * d);
    const Tensor lv = slice_lastdim(mix.log_vars, i * d, (i + 1) * d);
    const Tensor comp_nll = gaussian_nll(u, mu, lv);
    cols.push_back(
        add(slice_lastdim(log_pi, i, i + 1), scale(comp_nll, -1.0)));
  }
  return scale(logsumexp_lastdim(concat_lastdim(cols)), -1.0);
}

Tensor ce_regularizer(const Tensor& switch_batch) {
  const int b = switch_batch.rows();
  const int k = switch_batch.cols();
  if (k < 1) throw ShapeError("ce_regularizer: empty switch batch");
  const Tensor y_bar =
      matmul(Tensor::full({1, b}, 1.0 / b), switch_batch);  // column means
  return scale(sum(log(y_bar)), -1.0 / k);
}

}  // namespace sdn
