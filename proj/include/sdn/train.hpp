#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sdn/adam.hpp"
#include "sdn/dataset.hpp"
#include "sdn/gumbel.hpp"
#include "sdn/losses.hpp"
#include "sdn/models.hpp"

namespace sdn {

struct TrainConfig {
  int batch_size = 64;
  int epochs = 200;
  uint64_t seed = 0;
  GumbelConfig gumbel;    // switch width and annealing schedule
  bool use_ce_reg = true;
  double ce_weight = 1.0;
  AdamHyper adam;
  int L = 10;             // history window for the control-law likelihood
  double dt = 0.05;

  void validate() const;
};

// The likelihood needs each sample's recent history, not just (z, u), so
// the loader flattens every record into fixed-width rows once up front:
// current controlled substate, running sum of past substates, how many
// past states that sum saw, and the one-step backward difference per dt
// (angle-wrapped where the substate is angular). Batches then shuffle
// freely without touching sequence structure again.
struct TrainSet {
  int n = 0;
  int obs_dim = 0;
  int act_dim = 0;
  int pid_dim = 0;
  std::vector<double> z, u, xk, sumx, cnt, diff;  // n rows each, flattened
  std::vector<int> mode;                          // -1 when unlabelled
};

// Rows begin..end (end = -1 for all records). Window context may reach
// records before `begin`; only episode boundaries cut it off.
TrainSet materialize_windows(const Demonstration& demo, int L, double dt,
                             int begin = 0, int end = -1);

// Tensor views of a subset of rows, in the given order.
struct WindowBatch {
  Tensor z, u, xk, sumx, cnt, diff;
};
WindowBatch gather_batch(const TrainSet& set, const std::vector<int>& rows);

// Loss of one SDN batch: mean control-law NLL plus the weighted batch
// regularizer (when enabled).
struct SdnLossParts {
  Tensor total, nll, ce;
  Tensor switch_y;
};
SdnLossParts sdn_loss(const SdnModel& m, const WindowBatch& batch, double tau,
                      const Tensor& noise, bool use_ce_reg, double ce_weight);

// Predicted batch actions under the decoded per-sample control law.
Tensor control_law_mean(const DecodedBlocks& blocks, const WindowBatch& batch);

struct EpochStats {
  int epoch = 0;
  double tau = 0.0;
  double nll = 0.0;
  double ce = 0.0;
  double total = 0.0;
  std::vector<double> y_bar;  // batch-mean switch (or mixture) activation
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int total_steps = 0;
};

void save_history_csv(const TrainHistory& hist, const std::string& path);

// Full training runs. The dataset header supplies the episode layout and
// the controlled substate; cfg supplies everything else. Datasets with a
// train_frames header entry are trained on that leading slice only.
std::pair<SdnModel, TrainHistory> train_sdn(const Demonstration& demo,
                                            const TrainConfig& cfg);
std::pair<MdnModel, TrainHistory> train_mdn(const Demonstration& demo,
                                            const TrainConfig& cfg);
std::pair<RegressorModel, TrainHistory> train_regressor(
    const Demonstration& demo, const TrainConfig& cfg);

// Trunk used by every model kind. The pendulum gets a compact 16-16-16
// stack; anything wider (the arm, rendered or direct) gets 64-64.
TrunkConfig default_trunk(int obs_dim);

// Head layout implied by the dataset: gain learning with the goal pinned
// for the pendulum, goal learning with the gain pinned for the arm.
HeadSpec head_for_dataset(const Demonstration& demo, int k);

}  // namespace sdn
