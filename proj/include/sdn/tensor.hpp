#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace sdn {

using Shape = std::vector<int>;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // allocated lazily, same length as data
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;
  uint64_t seq = 0;  // creation order; inputs always precede outputs

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major tensor of 64-bit reals with optional reverse-mode
// gradient tracking. Value-semantics handle: copies share the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Shape {1, n}.
  static Tensor row(const std::vector<double>& values,
                    bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  long long size() const {
    return static_cast<long long>(impl_->data.size());
  }
  // Last-axis extent and the product of the leading ones.
  int cols() const { return impl_->shape.back(); }
  int rows() const {
    return static_cast<int>(impl_->data.size()) / impl_->shape.back();
  }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  double value() const;  // scalar tensors only
  double operator[](long long i) const { return impl_->data[i]; }
  double operator()(int r, int c) const {
    return impl_->data[static_cast<size_t>(r) * cols() + c];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  std::vector<double>& grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  const std::vector<double>& grad() const {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() {
    if (impl_) impl_->grad.assign(impl_->data.size(), 0.0);
  }

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Recorded operation set. Every op validates shapes and records itself on
// the implicit computation graph when any input requires a gradient.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // clamps tiny positives to 1e-12, rejects x < 0
Tensor softmax_lastdim(const Tensor& x);
Tensor logsumexp_lastdim(const Tensor& x);  // keeps the last axis as extent 1
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor slice_lastdim(const Tensor& x, int c0, int c1);
Tensor concat_lastdim(const std::vector<Tensor>& xs);

// Populates .grad on every requires_grad leaf reachable from loss.
// Gradients accumulate additively across fan-out and across calls.
void backward(const Tensor& loss);

// Max over all coordinates of |analytic - central difference| /
// max(1, |analytic|, |central|). f must be deterministic.
double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                  std::vector<Tensor>& params, double h);

std::string shape_str(const Shape& s);

}  // namespace sdn
