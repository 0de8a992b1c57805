#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdn/dataset.hpp"
#include "sdn/models.hpp"

namespace sdn {

// Closed-loop pendulum policies. Policies may carry state across steps
// (the identified controllers keep a history window), so every episode
// starts with begin_episode().
class PendulumPolicy {
 public:
  virtual ~PendulumPolicy() = default;
  virtual void begin_episode() {}
  virtual double act(const PendulumState& s) = 0;
};

class DemonstratorPolicy : public PendulumPolicy {
 public:
  DemonstratorPolicy(const PendulumPhysics& physics,
                     const DemonstratorConfig& cfg)
      : physics_(physics), cfg_(cfg) {}
  double act(const PendulumState& s) override {
    return demonstrator_action(s, physics_, cfg_).u;
  }

 private:
  PendulumPhysics physics_;
  DemonstratorConfig cfg_;
};

// Identified hybrid controller run in eval mode: pick the argmax mode from
// the observation, then apply that mode's control law over the recent
// angle history.
class SdnPendulumPolicy : public PendulumPolicy {
 public:
  SdnPendulumPolicy(const SdnModel& model, int L, double dt);
  void begin_episode() override;
  double act(const PendulumState& s) override;

 private:
  const SdnModel& model_;
  std::vector<PidParams> table_;
  HistoryWindow hist_;
};

// Plain behaviour-cloning baseline: the network maps observation straight
// to torque.
class RegressorPendulumPolicy : public PendulumPolicy {
 public:
  explicit RegressorPendulumPolicy(const RegressorModel& model)
      : model_(model) {}
  double act(const PendulumState& s) override;

 private:
  const RegressorModel& model_;
};

// Mixture baseline acting with the mean of its heaviest component.
class MdnPendulumPolicy : public PendulumPolicy {
 public:
  explicit MdnPendulumPolicy(const MdnModel& model) : model_(model) {}
  double act(const PendulumState& s) override;

 private:
  const MdnModel& model_;
};

struct RolloutStats {
  double mean_reward = 0.0;
  double std_reward = 0.0;
  int failures = 0;
};

// Average per-step reward -(theta^2 + 0.1 omega^2 + 0.001 u^2) per episode,
// aggregated over episodes started exactly like the dataset generator
// (episode i draws its state from seed + i, so paired comparisons share
// starts). An episode that leaves the finite range is scored at the mean of
// its completed prefix and counted as a failure; more than 5% failures
// aborts the evaluation.
RolloutStats rollout(PendulumPolicy& policy, const PendulumPhysics& physics,
                     int n_episodes, int horizon, uint64_t seed);

struct PhaseMapRecord {
  double theta = 0.0;
  double omega = 0.0;
  int mode = 0;
  double u = 0.0;
};

// n evenly spaced points. Half-open ranges step by (hi-lo)/n and leave hi
// out (used for the wrapped angle axis); closed ranges include both ends.
std::vector<double> linspace(double lo, double hi, int n, bool include_end);

// Eval-mode switch decision and control response over the grid. The
// response at (theta, omega) is the selected mode's law on the two-state
// window {theta - omega dt (wrapped), theta}, so the derivative term sees
// exactly omega. Records are ordered theta-major.
std::vector<PhaseMapRecord> phase_map(const SdnModel& m,
                                      const std::vector<double>& thetas,
                                      const std::vector<double>& omegas,
                                      double dt);

// Header `theta,omega,mode,u`, one record per line.
void save_phase_map_csv(const std::vector<PhaseMapRecord>& records,
                        const std::string& path);

struct PurityReport {
  double purity = 0.0;
  // confusion[p][t] counts frames with predicted label p and true label t.
  std::vector<std::vector<long long>> confusion;
  // Best one-to-one relabeling: predicted label p plays true label
  // label_map[p], or -1 when p went unmatched.
  std::vector<int> label_map;
};

// Fraction of frames whose predicted label matches the truth under the
// best one-to-one label assignment, found by brute force. Factorial in
// max(n_pred_labels, n_true_labels); beyond 6 labels the caller must opt
// in explicitly.
PurityReport switch_purity(const std::vector<int>& pred,
                           const std::vector<int>& truth, int n_pred_labels,
                           int n_true_labels, bool allow_large = false);

struct GoalErrors {
  double rmse_deg = 0.0;
  std::vector<double> per_frame_deg;  // per-frame RMS across joints
};

// Root mean square error between per-frame predicted and true goal
// vectors, over all frames and joints, reported in degrees.
GoalErrors goal_rmse(const std::vector<std::vector<double>>& pred,
                     const std::vector<std::vector<double>>& truth);

struct GoalMatch {
  std::vector<int> pred_for_true;  // index of the matched predicted goal
  std::vector<double> err_deg;     // max-norm error per true goal, degrees
  std::vector<bool> failed;        // err_deg > 5
};

// Assigns each true goal its own predicted goal (injectively) minimizing
// the total max-norm error, brute force over arrangements. Extra predicted
// goals are allowed and ignored; fewer than M predictions is an error.
GoalMatch permutation_match(const std::vector<std::vector<double>>& pred_goals,
                            const std::vector<std::vector<double>>& true_goals,
                            bool allow_large = false);

// Batched per-frame quantities on a demonstration slice [begin, end).
// Modes: argmax switch state (SDN) or heaviest mixture weight (MDN).
std::vector<int> sdn_frame_modes(const SdnModel& m, const Demonstration& demo,
                                 int begin = 0, int end = -1);
std::vector<int> mdn_frame_modes(const MdnModel& m, const Demonstration& demo,
                                 int begin = 0, int end = -1);

// Per-frame goal estimates. The switching model reads its reference block
// directly; the baselines only predict actions, so their goal is implied
// by inverting the known law: goal = x + u_hat / kp_fixed (kp_fixed from
// the dataset header). True goals come from the recorded mode labels.
std::vector<std::vector<double>> sdn_frame_goals(const SdnModel& m,
                                                 const Demonstration& demo,
                                                 int begin = 0, int end = -1);
std::vector<std::vector<double>> mdn_frame_goals(const MdnModel& m,
                                                 const Demonstration& demo,
                                                 int begin = 0, int end = -1);
std::vector<std::vector<double>> regressor_frame_goals(
    const RegressorModel& m, const Demonstration& demo, int begin = 0,
    int end = -1);
std::vector<std::vector<double>> true_frame_goals(const Demonstration& demo,
                                                  int begin = 0, int end = -1);

struct EvalReport {
  std::optional<double> mean_reward;
  std::optional<double> std_reward;
  std::optional<double> rmse_deg;
  std::optional<double> purity;
  std::vector<std::vector<long long>> confusion;
};

nlohmann::json eval_report_to_json(const EvalReport& report);

}  // namespace sdn
