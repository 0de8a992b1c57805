#include "sdn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "sdn/errors.hpp"

namespace sdn {

namespace {

std::atomic<uint64_t> g_seq{1};

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape,
                                              std::vector<double> data,
                                              bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  impl->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return impl;
}

long long shape_size(const Shape& s) {
  long long n = 1;
  for (int e : s) n *= e;
  return n;
}

void validate_shape(const Shape& s, const char* who) {
  if (s.empty()) throw ShapeError(std::string(who) + ": empty shape");
  for (int e : s) {
    if (e <= 0) throw ShapeError(std::string(who) + ": non-positive extent in " + shape_str(s));
  }
}

Tensor make_node(Shape shape, std::vector<double> data,
                 std::vector<std::shared_ptr<detail::TensorImpl>> parents,
                 std::function<void(detail::TensorImpl&)> backward_fn) {
  bool needs_grad = false;
  for (const auto& p : parents) needs_grad = needs_grad || p->requires_grad;
  auto impl = make_impl(std::move(shape), std::move(data), needs_grad);
  if (needs_grad) {
    impl->parents = std::move(parents);
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(impl));
}

void check_finite_input(const Tensor& x, const char* op) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite input value");
    }
  }
}

// Row/col strides of an operand broadcast against an (R, C) output.
struct Bcast {
  size_t sr, sc;
};

Bcast bcast_strides(int r, int c, int out_r, int out_c, const char* op,
                    const Shape& sa, const Shape& sb) {
  if ((r != out_r && r != 1) || (c != out_c && c != 1)) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(sa) +
                     " and " + shape_str(sb));
  }
  return Bcast{r == 1 ? 0 : static_cast<size_t>(c), c == 1 ? 0u : 1u};
}

struct BinaryPlan {
  Shape out_shape;
  int out_r = 0, out_c = 0;
  Bcast a{}, b{};
  bool flat = false;  // identical shapes, no index mapping needed
};

BinaryPlan plan_binary(const Tensor& a, const Tensor& b, const char* op) {
  BinaryPlan p;
  if (a.shape() == b.shape()) {
    p.out_shape = a.shape();
    p.flat = true;
    return p;
  }
  // Row/column broadcast is supported for rank-2 operands only.
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError(std::string(op) + ": incompatible shapes " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  int ra = a.shape()[0], ca = a.shape()[1];
  int rb = b.shape()[0], cb = b.shape()[1];
  p.out_r = std::max(ra, rb);
  p.out_c = std::max(ca, cb);
  p.a = bcast_strides(ra, ca, p.out_r, p.out_c, op, a.shape(), b.shape());
  p.b = bcast_strides(rb, cb, p.out_r, p.out_c, op, a.shape(), b.shape());
  p.out_shape = {p.out_r, p.out_c};
  return p;
}

void view_2d(const Tensor& x, int& rows, int& cols) {
  cols = x.shape().back();
  rows = static_cast<int>(x.size() / cols);
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  validate_shape(shape, "zeros");
  std::vector<double> d(shape_size(shape), 0.0);
  return Tensor(make_impl(std::move(shape), std::move(d), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  validate_shape(shape, "full");
  std::vector<double> d(shape_size(shape), value);
  return Tensor(make_impl(std::move(shape), std::move(d), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  validate_shape(shape, "from_data");
  if (shape_size(shape) != static_cast<long long>(data.size())) {
    throw ShapeError("from_data: shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  return Tensor(make_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows,
                         bool requires_grad) {
  if (rows.empty()) throw ShapeError("from_rows: no rows");
  int c = static_cast<int>(rows[0].size());
  std::vector<double> d;
  d.reserve(rows.size() * c);
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != c) {
      throw ShapeError("from_rows: ragged rows");
    }
    d.insert(d.end(), r.begin(), r.end());
  }
  return from_data({static_cast<int>(rows.size()), c}, std::move(d),
                   requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::row(const std::vector<double>& values, bool requires_grad) {
  return from_data({1, static_cast<int>(values.size())},
                   std::vector<double>(values), requires_grad);
}

double Tensor::value() const {
  if (size() != 1) {
    throw ShapeError("value: tensor " + shape_str(shape()) + " is not scalar");
  }
  return impl_->data[0];
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  const auto& da = a.data();
  const auto& db = b.data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double av = da[static_cast<size_t>(i) * k + p];
      if (av == 0.0) continue;
      const double* brow = &db[static_cast<size_t>(p) * n];
      double* orow = &out[static_cast<size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_node(
      {m, n}, std::move(out), {ai, bi},
      [ai, bi, m, k, n](detail::TensorImpl& self) {
        const auto& g = self.grad;
        if (ai->requires_grad) {
          ai->ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const double gv = g[static_cast<size_t>(i) * n + j];
              if (gv == 0.0) continue;
              for (int p = 0; p < k; ++p)
                ai->grad[static_cast<size_t>(i) * k + p] +=
                    gv * bi->data[static_cast<size_t>(p) * n + j];
            }
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
              const double av = ai->data[static_cast<size_t>(i) * k + p];
              if (av == 0.0) continue;
              for (int j = 0; j < n; ++j)
                bi->grad[static_cast<size_t>(p) * n + j] +=
                    av * g[static_cast<size_t>(i) * n + j];
            }
        }
      });
}

namespace {

enum class BinKind { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind,
                 const char* name) {
  BinaryPlan plan = plan_binary(a, b, name);
  const auto& da = a.data();
  const auto& db = b.data();
  std::vector<double> out;
  if (plan.flat) {
    out.resize(da.size());
    for (size_t i = 0; i < da.size(); ++i) {
      out[i] = kind == BinKind::Add   ? da[i] + db[i]
               : kind == BinKind::Sub ? da[i] - db[i]
                                      : da[i] * db[i];
    }
  } else {
    out.resize(static_cast<size_t>(plan.out_r) * plan.out_c);
    for (int r = 0; r < plan.out_r; ++r)
      for (int c = 0; c < plan.out_c; ++c) {
        const double av = da[r * plan.a.sr + c * plan.a.sc];
        const double bv = db[r * plan.b.sr + c * plan.b.sc];
        out[static_cast<size_t>(r) * plan.out_c + c] =
            kind == BinKind::Add ? av + bv : kind == BinKind::Sub ? av - bv : av * bv;
      }
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_node(
      plan.out_shape, std::move(out), {ai, bi},
      [ai, bi, plan, kind](detail::TensorImpl& self) {
        const auto& g = self.grad;
        auto accum = [&](detail::TensorImpl* t, const Bcast& bc, bool is_a) {
          if (!t->requires_grad) return;
          t->ensure_grad();
          if (plan.flat) {
            for (size_t i = 0; i < g.size(); ++i) {
              double gv = g[i];
              if (kind == BinKind::Mul)
                gv *= (is_a ? bi->data[i] : ai->data[i]);
              else if (kind == BinKind::Sub && !is_a)
                gv = -gv;
              t->grad[i] += gv;
            }
          } else {
            for (int r = 0; r < plan.out_r; ++r)
              for (int c = 0; c < plan.out_c; ++c) {
                double gv = g[static_cast<size_t>(r) * plan.out_c + c];
                if (kind == BinKind::Mul) {
                  const Bcast& other = is_a ? plan.b : plan.a;
                  const auto& od = is_a ? bi->data : ai->data;
                  gv *= od[r * other.sr + c * other.sc];
                } else if (kind == BinKind::Sub && !is_a) {
                  gv = -gv;
                }
                t->grad[r * bc.sr + c * bc.sc] += gv;
              }
          }
        };
        accum(ai.get(), plan.a, true);
        accum(bi.get(), plan.b, false);
      });
}

Tensor unary_op(const Tensor& x,
                const std::function<double(double)>& f,
                // dy/dx from (input, output)
                const std::function<double(double, double)>& df) {
  const auto& dx = x.data();
  std::vector<double> out(dx.size());
  for (size_t i = 0; i < dx.size(); ++i) out[i] = f(dx[i]);
  auto xi = x.impl();
  auto out_copy = out;  // output values are reused in the backward rule
  return make_node(x.shape(), std::move(out), {xi},
                   [xi, df, out_copy](detail::TensorImpl& self) {
                     xi->ensure_grad();
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       xi->grad[i] += df(xi->data[i], out_copy[i]) * self.grad[i];
                   });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul, "mul"); }

Tensor scale(const Tensor& x, double c) {
  const auto& dx = x.data();
  std::vector<double> out(dx.size());
  for (size_t i = 0; i < dx.size(); ++i) out[i] = c * dx[i];
  auto xi = x.impl();
  return make_node(x.shape(), std::move(out), {xi},
                   [xi, c](detail::TensorImpl& self) {
                     xi->ensure_grad();
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       xi->grad[i] += c * self.grad[i];
                   });
}

Tensor tanh(const Tensor& x) {
  return unary_op(x, [](double v) { return std::tanh(v); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary_op(x, [](double v) { return v > 0.0 ? v : 0.0; },
                  [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  check_finite_input(x, "exp");
  return unary_op(x, [](double v) { return std::exp(v); },
                  [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  check_finite_input(x, "log");
  for (double v : x.data()) {
    if (v < 0.0) throw NumericError("log: negative input");
  }
  // Underflowed probabilities are clamped to 1e-12; true negatives reject.
  return unary_op(x,
                  [](double v) { return std::log(std::max(v, 1e-12)); },
                  [](double v, double) { return 1.0 / std::max(v, 1e-12); });
}

Tensor softmax_lastdim(const Tensor& x) {
  int rows, cols;
  view_2d(x, rows, cols);
  const auto& dx = x.data();
  std::vector<double> out(dx.size());
  for (int r = 0; r < rows; ++r) {
    const double* in = &dx[static_cast<size_t>(r) * cols];
    double* o = &out[static_cast<size_t>(r) * cols];
    double mx = in[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    for (int c = 0; c < cols; ++c) o[c] /= z;
  }
  auto xi = x.impl();
  auto y = out;
  return make_node(x.shape(), std::move(out), {xi},
                   [xi, y, rows, cols](detail::TensorImpl& self) {
                     xi->ensure_grad();
                     for (int r = 0; r < rows; ++r) {
                       const double* yr = &y[static_cast<size_t>(r) * cols];
                       const double* gr = &self.grad[static_cast<size_t>(r) * cols];
                       double dot = 0.0;
                       for (int c = 0; c < cols; ++c) dot += yr[c] * gr[c];
                       for (int c = 0; c < cols; ++c)
                         xi->grad[static_cast<size_t>(r) * cols + c] +=
                             yr[c] * (gr[c] - dot);
                     }
                   });
}

Tensor logsumexp_lastdim(const Tensor& x) {
  check_finite_input(x, "logsumexp-lastdim");
  int rows, cols;
  view_2d(x, rows, cols);
  const auto& dx = x.data();
  std::vector<double> out(rows);
  for (int r = 0; r < rows; ++r) {
    const double* in = &dx[static_cast<size_t>(r) * cols];
    double mx = in[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) z += std::exp(in[c] - mx);
    out[r] = mx + std::log(z);
  }
  Shape out_shape = x.shape();
  out_shape.back() = 1;
  auto xi = x.impl();
  auto vals = out;
  return make_node(std::move(out_shape), std::move(out), {xi},
                   [xi, vals, rows, cols](detail::TensorImpl& self) {
                     xi->ensure_grad();
                     for (int r = 0; r < rows; ++r) {
                       const double g = self.grad[r];
                       if (g == 0.0) continue;
                       for (int c = 0; c < cols; ++c) {
                         const double p = std::exp(
                             xi->data[static_cast<size_t>(r) * cols + c] - vals[r]);
                         xi->grad[static_cast<size_t>(r) * cols + c] += g * p;
                       }
                     }
                   });
}

namespace {

Tensor reduce_all(const Tensor& x, bool take_mean) {
  const auto& dx = x.data();
  double acc = 0.0;
  for (double v : dx) acc += v;
  const double denom = take_mean ? static_cast<double>(dx.size()) : 1.0;
  auto xi = x.impl();
  return make_node({1}, {acc / denom}, {xi},
                   [xi, denom](detail::TensorImpl& self) {
                     xi->ensure_grad();
                     const double g = self.grad[0] / denom;
                     for (auto& gv : xi->grad) gv += g;
                   });
}

}  // namespace

Tensor sum(const Tensor& x) { return reduce_all(x, false); }
Tensor mean(const Tensor& x) { return reduce_all(x, true); }

Tensor slice_lastdim(const Tensor& x, int c0, int c1) {
  int rows, cols;
  view_2d(x, rows, cols);
  if (c0 < 0 || c1 > cols || c0 >= c1) {
    throw ShapeError("slice: range [" + std::to_string(c0) + ", " +
                     std::to_string(c1) + ") invalid for " + shape_str(x.shape()));
  }
  const int w = c1 - c0;
  const auto& dx = x.data();
  std::vector<double> out(static_cast<size_t>(rows) * w);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < w; ++c)
      out[static_cast<size_t>(r) * w + c] = dx[static_cast<size_t>(r) * cols + c0 + c];
  Shape out_shape = x.shape();
  out_shape.back() = w;
  auto xi = x.impl();
  return make_node(std::move(out_shape), std::move(out), {xi},
                   [xi, rows, cols, c0, w](detail::TensorImpl& self) {
                     xi->ensure_grad();
                     for (int r = 0; r < rows; ++r)
                       for (int c = 0; c < w; ++c)
                         xi->grad[static_cast<size_t>(r) * cols + c0 + c] +=
                             self.grad[static_cast<size_t>(r) * w + c];
                   });
}

Tensor concat_lastdim(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  Shape lead = xs[0].shape();
  lead.pop_back();
  int total = 0;
  for (const auto& x : xs) {
    Shape l = x.shape();
    l.pop_back();
    if (l != lead) {
      throw ShapeError("concat: leading dims differ, " + shape_str(xs[0].shape()) +
                       " vs " + shape_str(x.shape()));
    }
    total += x.shape().back();
  }
  const int rows = xs[0].rows();
  std::vector<double> out(static_cast<size_t>(rows) * total);
  std::vector<int> widths;
  int off = 0;
  for (const auto& x : xs) {
    const int w = x.shape().back();
    widths.push_back(w);
    const auto& dx = x.data();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < w; ++c)
        out[static_cast<size_t>(r) * total + off + c] = dx[static_cast<size_t>(r) * w + c];
    off += w;
  }
  Shape out_shape = xs[0].shape();
  out_shape.back() = total;
  std::vector<std::shared_ptr<detail::TensorImpl>> parents;
  for (const auto& x : xs) parents.push_back(x.impl());
  return make_node(std::move(out_shape), std::move(out), std::move(parents),
                   [widths, rows, total](detail::TensorImpl& self) {
                     int off2 = 0;
                     for (size_t i = 0; i < self.parents.size(); ++i) {
                       auto& p = *self.parents[i];
                       const int w = widths[i];
                       if (p.requires_grad) {
                         p.ensure_grad();
                         for (int r = 0; r < rows; ++r)
                           for (int c = 0; c < w; ++c)
                             p.grad[static_cast<size_t>(r) * w + c] +=
                                 self.grad[static_cast<size_t>(r) * total + off2 + c];
                       }
                       off2 += w;
                     }
                   });
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar tensor");
  }
  if (!std::isfinite(loss.value())) {
    throw NumericError("backward: loss is non-finite");
  }
  if (!loss.requires_grad()) return;  // constant loss: nothing to propagate

  // Reachable subgraph, ordered by creation sequence (a valid topological
  // order by construction).
  std::vector<detail::TensorImpl*> nodes;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<detail::TensorImpl*> stack{loss.impl().get()};
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const detail::TensorImpl* a, const detail::TensorImpl* b) {
              return a->seq > b->seq;
            });

  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (auto* n : nodes) {
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                  std::vector<Tensor>& params, double h) {
  if (h <= 0.0) throw ConfigError("grad_check: h must be positive");
  for (auto& p : params) p.zero_grad();
  Tensor loss = f(params);
  if (!std::isfinite(loss.value())) {
    throw NumericError("grad_check: non-finite loss at base point");
  }
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& d = params[pi].data();
    for (size_t i = 0; i < d.size(); ++i) {
      const double saved = d[i];
      d[i] = saved + h;
      const double fp = f(params).value();
      d[i] = saved - h;
      const double fm = f(params).value();
      d[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("grad_check: non-finite loss at probe point");
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[pi][i];
      const double err = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace sdn
