#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdn/arm.hpp"
#include "sdn/pendulum.hpp"

namespace sdn {

// One behaviour-cloning sample: state x, demonstrated action u, observation
// z fed to the network, and the generator's mode label when it has one
// (labels are for evaluation only, never for training).
struct DemoRecord {
  double t = 0.0;
  std::vector<double> x;
  std::vector<double> u;
  std::vector<double> z;
  std::optional<int> mode;
};

// A demonstration dataset plus the header describing how it was made.
// meta always carries: env, seed, dt, L (history window for the PID
// likelihood), episode_horizon, pid_dims, pid_angular; the generators add
// env-specific fields on top (see dataset.cpp).
struct Demonstration {
  nlohmann::json meta;
  std::vector<DemoRecord> records;
};

// Swing-up demonstrations. Episodes start from theta ~ U[-pi, pi),
// omega ~ U[-1, 1] (episode i seeded with seed + i), run `horizon` steps
// under the demonstrator, and are concatenated until n_pairs records are
// collected. Throws ConfigError when more than 20% of episodes fail to end
// in balance mode, since that points at a mistuned DemonstratorConfig.
// The default horizon keeps every mode above a 5% share of the labels;
// longer episodes water the dataset down with balance steps.
Demonstration generate_pendulum_dataset(int n_pairs,
                                        const PendulumPhysics& physics,
                                        const DemonstratorConfig& cfg,
                                        uint64_t seed, int horizon = 150,
                                        int window = 10);

// Goal-reaching demonstrations. The arm starts straight and cycles through
// cfg.goals in order, advancing whenever every joint is within 1 degree of
// the current goal; u_k = kp_fixed * (goal - x_k) + actuation noise and
// x_{k+1} = x_k + u_k * dt. The first half of the frames is flagged as the
// training split in meta.train_frames.
Demonstration generate_arm_dataset(int n_frames, const ArmTaskConfig& cfg,
                                   uint64_t seed, int window = 10);

// JSON-lines round trip: one header line {"meta": {...}} followed by one
// record per line. Loading validates dims and strictly increasing t and
// reports offending line numbers.
void save_demonstration(const Demonstration& demo, const std::string& path);
Demonstration load_demonstration(const std::string& path);

}  // namespace sdn
