#include "sdn/adam.hpp"

#include <cmath>

#include "sdn/errors.hpp"

namespace sdn {

namespace {

void validate_hyper(const AdamHyper& h) {
  if (h.lr <= 0.0) throw ConfigError("adam: lr must be positive");
  if (h.beta1 < 0.0 || h.beta1 >= 1.0) throw ConfigError("adam: beta1 must be in [0, 1)");
  if (h.beta2 < 0.0 || h.beta2 >= 1.0) throw ConfigError("adam: beta2 must be in [0, 1)");
  if (h.eps <= 0.0) throw ConfigError("adam: eps must be positive");
}

}  // namespace

AdamState make_adam_state(const std::vector<Tensor>& params,
                          const AdamHyper& hyper) {
  validate_hyper(hyper);
  AdamState st;
  st.hyper = hyper;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const auto& p : params) {
    st.m.emplace_back(p.size(), 0.0);
    st.v.emplace_back(p.size(), 0.0);
  }
  return st;
}

void adam_step(std::vector<Tensor>& params, AdamState& state,
               const std::vector<std::string>& names) {
  if (params.size() != state.m.size()) {
    throw ConfigError("adam: state built for " + std::to_string(state.m.size()) +
                      " blocks, got " + std::to_string(params.size()));
  }
  const AdamHyper& h = state.hyper;
  const long long t = ++state.step;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (size_t b = 0; b < params.size(); ++b) {
    auto& p = params[b];
    if (static_cast<size_t>(p.size()) != state.m[b].size()) {
      throw ConfigError("adam: block " + std::to_string(b) + " changed size");
    }
    const auto& g = p.grad();
    auto& d = p.data();
    auto& m = state.m[b];
    auto& v = state.v[b];
    for (size_t i = 0; i < d.size(); ++i) {
      if (!std::isfinite(g[i])) {
        const std::string who =
            b < names.size() ? names[b] : "block " + std::to_string(b);
        throw NumericError("adam: non-finite gradient in " + who);
      }
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      d[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
  }
}

}  // namespace sdn
