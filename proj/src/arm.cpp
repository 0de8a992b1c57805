#include "sdn/arm.hpp"

#include <algorithm>
#include <cmath>

#include "sdn/errors.hpp"

namespace sdn {

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

}  // namespace

void ArmTaskConfig::validate() const {
  if (n_joints < 1) throw ConfigError("arm: n_joints must be >= 1");
  // A single goal is allowed for diagnostics (pure point-reaching); the
  // identification experiments always use two or more.
  if (goals.empty()) throw ConfigError("arm: need at least one goal");
  for (const auto& g : goals) {
    if (static_cast<int>(g.size()) != n_joints) {
      throw ConfigError("arm: goal dimensionality disagrees with n_joints");
    }
    for (double v : g) {
      if (!std::isfinite(v)) throw ConfigError("arm: non-finite goal entry");
    }
  }
  // Goals closer than 10 degrees in max-norm would blur the mode labels.
  for (size_t i = 0; i < goals.size(); ++i) {
    for (size_t j = i + 1; j < goals.size(); ++j) {
      double sep = 0.0;
      for (int d = 0; d < n_joints; ++d) {
        sep = std::max(sep, std::abs(goals[i][d] - goals[j][d]));
      }
      if (sep < 10.0 * kDeg) {
        throw ConfigError("arm: goals " + std::to_string(i) + " and " +
                          std::to_string(j) + " are closer than 10 degrees");
      }
    }
  }
  if (!(kp_fixed > 0.0)) throw ConfigError("arm: kp_fixed must be positive");
  if (obs == ArmObsKind::Rendered && (render_h < 2 || render_w < 2)) {
    throw ConfigError("arm: render size must be at least 2x2");
  }
  if (!(noise_std >= 0.0) || !(process_noise_std >= 0.0)) {
    throw ConfigError("arm: noise levels must be >= 0");
  }
  if (!(dt > 0.0)) throw ConfigError("arm: dt must be positive");
}

std::vector<std::vector<double>> default_arm_goals() {
  return {
      {0.9, -0.5, 0.4, -0.3, 0.5, -0.2, 0.3, -0.4},
      {-0.7, 0.6, -0.3, 0.5, -0.4, 0.3, -0.5, 0.2},
      {0.3, 0.8, 0.5, -0.6, -0.3, 0.5, -0.2, 0.6},
      {-0.4, -0.7, -0.5, 0.4, 0.6, -0.5, 0.4, -0.2},
  };
}

ArmTaskConfig default_arm_task() {
  ArmTaskConfig cfg;
  cfg.goals = default_arm_goals();
  cfg.validate();
  return cfg;
}

std::vector<double> arm_link_endpoints(const std::vector<double>& x) {
  std::vector<double> pts;
  pts.reserve(2 * x.size());
  double px = 0.0, py = 0.0, phi = 0.0;
  for (double angle : x) {
    phi += angle;
    px += std::cos(phi);
    py += std::sin(phi);
    pts.push_back(px);
    pts.push_back(py);
  }
  return pts;
}

namespace {

// Deposits `value` at fractional pixel (px, py) using bilinear weights.
// Out-of-frame samples are dropped; the arm fits the frame by construction
// but noisy configs may poke past the margin.
void splat(std::vector<double>& img, int h, int w, double px, double py,
           double value) {
  const int x0 = static_cast<int>(std::floor(px));
  const int y0 = static_cast<int>(std::floor(py));
  const double fx = px - x0;
  const double fy = py - y0;
  const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy,
                         fx * fy};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int i = 0; i < 4; ++i) {
    if (xs[i] < 0 || xs[i] >= w || ys[i] < 0 || ys[i] >= h) continue;
    img[static_cast<size_t>(ys[i]) * w + xs[i]] += value * wts[i];
  }
}

}  // namespace

std::vector<double> arm_render(const std::vector<double>& x,
                               const ArmTaskConfig& cfg, Rng* rng) {
  if (static_cast<int>(x.size()) != cfg.n_joints) {
    throw ShapeError("arm: expected " + std::to_string(cfg.n_joints) +
                     " joint angles, got " + std::to_string(x.size()));
  }

  std::vector<double> z;
  if (cfg.obs == ArmObsKind::Direct) {
    z = x;
  } else {
    const int h = cfg.render_h;
    const int w = cfg.render_w;
    z.assign(static_cast<size_t>(h) * w, 0.0);

    // Scale so the fully stretched arm (n_joints unit links) stays half a
    // pixel inside the frame; base at the image center.
    const double half = 0.5 * (std::min(h, w) - 1.0);
    const double scale = (half - 0.5) / cfg.n_joints;
    const double cx = 0.5 * (w - 1.0);
    const double cy = 0.5 * (h - 1.0);

    const auto pts = arm_link_endpoints(x);
    double ax = 0.0, ay = 0.0;  // current link start, world coords
    for (int j = 0; j < cfg.n_joints; ++j) {
      const double bx = pts[2 * j];
      const double by = pts[2 * j + 1];
      // Sample densely enough that neighbouring samples land under a
      // pixel apart (link length is 1 in world units).
      const int samples = std::max(2, static_cast<int>(std::ceil(2.0 * scale)));
      for (int s = 0; s <= samples; ++s) {
        const double f = static_cast<double>(s) / samples;
        const double wx = ax + f * (bx - ax);
        const double wy = ay + f * (by - ay);
        // Image y grows downward.
        splat(z, h, w, cx + scale * wx, cy - scale * wy, 1.0);
      }
      ax = bx;
      ay = by;
    }
    for (double& v : z) v = std::min(1.0, v);
  }

  if (rng != nullptr && cfg.noise_std > 0.0) {
    for (double& v : z) v += rng->normal(0.0, cfg.noise_std);
  }
  return z;
}

int arm_obs_dim(const ArmTaskConfig& cfg) {
  return cfg.obs == ArmObsKind::Direct ? cfg.n_joints
                                       : cfg.render_h * cfg.render_w;
}

}  // namespace sdn
