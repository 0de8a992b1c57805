#include "sdn/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <tuple>

#include "sdn/errors.hpp"
#include "sdn/gumbel.hpp"
#include "sdn/rng.hpp"

namespace sdn {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegPerRad = 180.0 / kPi;

double meta_number(const nlohmann::json& meta, const char* key) {
  if (!meta.contains(key) || !meta[key].is_number()) {
    throw ConfigError(std::string("eval: dataset header lacks '") + key + "'");
  }
  return meta[key].get<double>();
}

// Resolve a [begin, end) slice over the records, with end = -1 meaning all.
std::pair<int, int> record_range(const Demonstration& demo, int begin,
                                 int end) {
  const int n = static_cast<int>(demo.records.size());
  if (end < 0) end = n;
  if (begin < 0 || begin >= end || end > n) {
    throw EvalError("eval: record range [" + std::to_string(begin) + ", " +
                    std::to_string(end) + ") invalid for " +
                    std::to_string(n) + " records");
  }
  return {begin, end};
}

Tensor obs_tensor(const Demonstration& demo, int begin, int end) {
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<size_t>(end - begin));
  for (int i = begin; i < end; ++i) rows.push_back(demo.records[i].z);
  return Tensor::from_rows(rows);
}

double max_norm_rad(const std::vector<double>& a,
                    const std::vector<double>& b) {
  double m = 0.0;
  for (size_t d = 0; d < a.size(); ++d) {
    m = std::max(m, std::fabs(a[d] - b[d]));
  }
  return m;
}

}  // namespace

SdnPendulumPolicy::SdnPendulumPolicy(const SdnModel& model, int L, double dt)
    : model_(model),
      table_(extract_hybrid_system(model)),
      hist_(1, L, dt, {true}) {
  if (model.trunk.input_dim != 2) {
    throw ShapeError("policy: pendulum observation is (theta, omega), trunk "
                     "expects " +
                     std::to_string(model.trunk.input_dim) + " inputs");
  }
  for (const PidParams& p : table_) {
    if (p.kp.size() != 1) {
      throw ShapeError("policy: pendulum control is 1-dimensional, mode " +
                       std::to_string(p.mode_id) + " has " +
                       std::to_string(p.kp.size()) + " dims");
    }
  }
}

void SdnPendulumPolicy::begin_episode() { hist_.reset(); }

double SdnPendulumPolicy::act(const PendulumState& s) {
  hist_.push({s.theta});
  const SdnOutput out =
      sdn_forward_eval(model_, Tensor::row({s.theta, s.omega}));
  const int mode = argmax_lastdim(out.logits)[0];
  return pid_action(table_[static_cast<size_t>(mode)], hist_)[0];
}

double RegressorPendulumPolicy::act(const PendulumState& s) {
  if (model_.out_dim != 1) {
    throw ShapeError("policy: pendulum control is 1-dimensional, regressor "
                     "emits " +
                     std::to_string(model_.out_dim));
  }
  return regressor_forward(model_, Tensor::row({s.theta, s.omega})).mean(0, 0);
}

double MdnPendulumPolicy::act(const PendulumState& s) {
  if (model_.out_dim != 1) {
    throw ShapeError("policy: pendulum control is 1-dimensional, mixture "
                     "emits " +
                     std::to_string(model_.out_dim));
  }
  const MdnOutput out = mdn_forward(model_, Tensor::row({s.theta, s.omega}));
  const int heaviest = argmax_lastdim(out.weights)[0];
  return out.means(0, heaviest);
}

RolloutStats rollout(PendulumPolicy& policy, const PendulumPhysics& physics,
                     int n_episodes, int horizon, uint64_t seed) {
  if (n_episodes < 1) throw ConfigError("rollout: need at least one episode");
  if (horizon < 1) throw ConfigError("rollout: horizon must be >= 1");
  physics.validate();

  std::vector<double> ep_reward;
  ep_reward.reserve(static_cast<size_t>(n_episodes));
  int failures = 0;

  for (int ep = 0; ep < n_episodes; ++ep) {
    // Same draw order as the dataset generator, so an evaluation seeded like
    // a dataset visits the identical start states.
    Rng rng(seed + static_cast<uint64_t>(ep));
    PendulumState s;
    s.theta = rng.uniform(-kPi, kPi);
    s.omega = rng.uniform(-1.0, 1.0);

    policy.begin_episode();
    double total = 0.0;
    int steps = 0;
    bool failed = false;
    for (int k = 0; k < horizon; ++k) {
      if (!std::isfinite(s.theta) || !std::isfinite(s.omega)) {
        failed = true;
        break;
      }
      const double u = policy.act(s);
      if (!std::isfinite(u)) {
        failed = true;
        break;
      }
      // Cost what the plant actually applies, not the raw command.
      const double uc = std::clamp(u, -physics.u_max, physics.u_max);
      total -= s.theta * s.theta + 0.1 * s.omega * s.omega + 0.001 * uc * uc;
      ++steps;
      s = pendulum_step(s, u, physics);
    }
    // A diverged episode scores the average of its completed prefix; it still
    // counts toward the mean so divergence cannot look like success.
    ep_reward.push_back(steps > 0 ? total / steps : 0.0);
    if (failed) ++failures;
  }

  if (failures * 20 > n_episodes) {
    throw EvalError("rollout: " + std::to_string(failures) + " of " +
                    std::to_string(n_episodes) +
                    " episodes left the finite range");
  }

  RolloutStats stats;
  stats.failures = failures;
  const double n = static_cast<double>(ep_reward.size());
  stats.mean_reward =
      std::accumulate(ep_reward.begin(), ep_reward.end(), 0.0) / n;
  double var = 0.0;
  for (double r : ep_reward) {
    var += (r - stats.mean_reward) * (r - stats.mean_reward);
  }
  stats.std_reward = std::sqrt(var / n);
  return stats;
}

std::vector<double> linspace(double lo, double hi, int n, bool include_end) {
  if (!(hi > lo)) throw ConfigError("linspace: need hi > lo");
  if (n < (include_end ? 2 : 1)) {
    throw ConfigError("linspace: need at least " +
                      std::string(include_end ? "2 points" : "1 point"));
  }
  std::vector<double> out(static_cast<size_t>(n));
  const double step = (hi - lo) / static_cast<double>(include_end ? n - 1 : n);
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = lo + step * i;
  return out;
}

std::vector<PhaseMapRecord> phase_map(const SdnModel& m,
                                      const std::vector<double>& thetas,
                                      const std::vector<double>& omegas,
                                      double dt) {
  if (thetas.empty() || omegas.empty()) {
    throw ConfigError("phase_map: empty grid axis");
  }
  if (!(dt > 0.0)) throw ConfigError("phase_map: dt must be positive");
  if (m.trunk.input_dim != 2) {
    throw ShapeError("phase_map: trunk expects " +
                     std::to_string(m.trunk.input_dim) +
                     " inputs, the grid supplies (theta, omega)");
  }

  const std::vector<PidParams> table = extract_hybrid_system(m);
  for (const PidParams& p : table) {
    if (p.kp.size() != 1) {
      throw ShapeError("phase_map: mode " + std::to_string(p.mode_id) +
                       " is not a 1-dimensional law");
    }
  }

  // One batched eval forward decides every grid point's mode at once.
  std::vector<std::vector<double>> grid;
  grid.reserve(thetas.size() * omegas.size());
  for (double th : thetas) {
    for (double om : omegas) grid.push_back({th, om});
  }
  const SdnOutput out = sdn_forward_eval(m, Tensor::from_rows(grid));
  const std::vector<int> modes = argmax_lastdim(out.logits);

  std::vector<PhaseMapRecord> records;
  records.reserve(grid.size());
  HistoryWindow hist(1, 1, dt, {true});
  size_t i = 0;
  for (double th : thetas) {
    for (double om : omegas) {
      // Two-state window whose finite difference reproduces omega exactly,
      // so the response shows kp, kd, and one integral sample of the law.
      hist.reset();
      hist.push({wrap_angle(th - om * dt)});
      hist.push({th});
      PhaseMapRecord rec;
      rec.theta = th;
      rec.omega = om;
      rec.mode = modes[i];
      rec.u = pid_action(table[static_cast<size_t>(modes[i])], hist)[0];
      records.push_back(rec);
      ++i;
    }
  }
  return records;
}

void save_phase_map_csv(const std::vector<PhaseMapRecord>& records,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("phase_map: cannot open '" + path + "' for writing");
  out << "theta,omega,mode,u\n";
  out << std::setprecision(17);
  for (const PhaseMapRecord& r : records) {
    out << r.theta << "," << r.omega << "," << r.mode << "," << r.u << "\n";
  }
  if (!out) throw IoError("phase_map: short write to '" + path + "'");
}

PurityReport switch_purity(const std::vector<int>& pred,
                           const std::vector<int>& truth, int n_pred_labels,
                           int n_true_labels, bool allow_large) {
  if (pred.empty() || pred.size() != truth.size()) {
    throw EvalError("purity: need equal-length non-empty label sequences");
  }
  if (n_pred_labels < 1 || n_true_labels < 1) {
    throw EvalError("purity: label counts must be >= 1");
  }
  const int n = std::max(n_pred_labels, n_true_labels);
  if (n > 6 && !allow_large) {
    throw EvalError("purity: matching " + std::to_string(n) +
                    " labels is factorial work; pass allow_large to confirm");
  }

  PurityReport report;
  report.confusion.assign(
      static_cast<size_t>(n_pred_labels),
      std::vector<long long>(static_cast<size_t>(n_true_labels), 0));
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= n_pred_labels) {
      throw EvalError("purity: predicted label " + std::to_string(pred[i]) +
                      " out of range at frame " + std::to_string(i));
    }
    if (truth[i] < 0 || truth[i] >= n_true_labels) {
      throw EvalError("purity: true label " + std::to_string(truth[i]) +
                      " out of range at frame " + std::to_string(i));
    }
    ++report.confusion[static_cast<size_t>(pred[i])]
                      [static_cast<size_t>(truth[i])];
  }

  // Labels are arbitrary on both sides, so score the best one-to-one
  // relabeling. Padding both sides to n lets one permutation scan cover
  // unequal label counts.
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  long long best = -1;
  std::vector<int> best_perm;
  do {
    long long agree = 0;
    for (int p = 0; p < n_pred_labels; ++p) {
      const int t = perm[static_cast<size_t>(p)];
      if (t < n_true_labels) {
        agree += report.confusion[static_cast<size_t>(p)]
                                 [static_cast<size_t>(t)];
      }
    }
    if (agree > best) {
      best = agree;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  report.label_map.assign(static_cast<size_t>(n_pred_labels), -1);
  for (int p = 0; p < n_pred_labels; ++p) {
    const int t = best_perm[static_cast<size_t>(p)];
    if (t < n_true_labels) report.label_map[static_cast<size_t>(p)] = t;
  }
  report.purity =
      static_cast<double>(best) / static_cast<double>(pred.size());
  return report;
}

GoalErrors goal_rmse(const std::vector<std::vector<double>>& pred,
                     const std::vector<std::vector<double>>& truth) {
  if (pred.empty() || pred.size() != truth.size()) {
    throw EvalError("goal_rmse: need equal-length non-empty goal sequences");
  }
  GoalErrors errors;
  errors.per_frame_deg.reserve(pred.size());
  double total_sq = 0.0;
  long long total_n = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].empty() || pred[i].size() != truth[i].size()) {
      throw EvalError("goal_rmse: dimension mismatch at frame " +
                      std::to_string(i));
    }
    double frame_sq = 0.0;
    for (size_t d = 0; d < pred[i].size(); ++d) {
      const double e = pred[i][d] - truth[i][d];
      frame_sq += e * e;
    }
    total_sq += frame_sq;
    total_n += static_cast<long long>(pred[i].size());
    errors.per_frame_deg.push_back(
        std::sqrt(frame_sq / static_cast<double>(pred[i].size())) *
        kDegPerRad);
  }
  errors.rmse_deg =
      std::sqrt(total_sq / static_cast<double>(total_n)) * kDegPerRad;
  return errors;
}

GoalMatch permutation_match(const std::vector<std::vector<double>>& pred_goals,
                            const std::vector<std::vector<double>>& true_goals,
                            bool allow_large) {
  const int k = static_cast<int>(pred_goals.size());
  const int m = static_cast<int>(true_goals.size());
  if (m < 1) throw EvalError("goal_match: need at least one true goal");
  if (k < m) {
    throw EvalError("goal_match: " + std::to_string(k) +
                    " predictions cannot cover " + std::to_string(m) +
                    " goals");
  }
  if (k > 6 && !allow_large) {
    throw EvalError("goal_match: matching " + std::to_string(k) +
                    " goals is factorial work; pass allow_large to confirm");
  }
  const size_t dims = true_goals[0].size();
  for (const auto& g : true_goals) {
    if (g.size() != dims) {
      throw EvalError("goal_match: true goal dimensions disagree");
    }
  }
  for (const auto& g : pred_goals) {
    if (g.size() != dims) {
      throw EvalError("goal_match: predicted goal dimensions disagree");
    }
  }

  // Injective assignment of predictions to true goals minimizing the total
  // max-norm error; extra predictions simply go unused.
  std::vector<int> perm(static_cast<size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<int> best(static_cast<size_t>(m));
  do {
    double cost = 0.0;
    for (int j = 0; j < m; ++j) {
      cost += max_norm_rad(pred_goals[static_cast<size_t>(perm[j])],
                           true_goals[static_cast<size_t>(j)]);
    }
    if (cost < best_cost) {
      best_cost = cost;
      std::copy(perm.begin(), perm.begin() + m, best.begin());
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  GoalMatch match;
  match.pred_for_true = best;
  for (int j = 0; j < m; ++j) {
    const double err =
        max_norm_rad(pred_goals[static_cast<size_t>(best[j])],
                     true_goals[static_cast<size_t>(j)]) *
        kDegPerRad;
    match.err_deg.push_back(err);
    match.failed.push_back(err > 5.0);
  }
  return match;
}

std::vector<int> sdn_frame_modes(const SdnModel& m, const Demonstration& demo,
                                 int begin, int end) {
  std::tie(begin, end) = record_range(demo, begin, end);
  const SdnOutput out = sdn_forward_eval(m, obs_tensor(demo, begin, end));
  return argmax_lastdim(out.logits);
}

std::vector<int> mdn_frame_modes(const MdnModel& m, const Demonstration& demo,
                                 int begin, int end) {
  std::tie(begin, end) = record_range(demo, begin, end);
  const MdnOutput out = mdn_forward(m, obs_tensor(demo, begin, end));
  return argmax_lastdim(out.weights);
}

std::vector<std::vector<double>> sdn_frame_goals(const SdnModel& m,
                                                 const Demonstration& demo,
                                                 int begin, int end) {
  std::tie(begin, end) = record_range(demo, begin, end);
  const int b = end - begin;
  const SdnOutput out = sdn_forward_eval(m, obs_tensor(demo, begin, end));
  const Tensor mu = decode_blocks(m.head, out.params).mu;
  std::vector<std::vector<double>> goals(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    // Fixed references decode to a single broadcast row.
    const int r = mu.rows() == 1 ? 0 : i;
    std::vector<double> g(static_cast<size_t>(mu.cols()));
    for (int d = 0; d < mu.cols(); ++d) g[static_cast<size_t>(d)] = mu(r, d);
    goals[static_cast<size_t>(i)] = std::move(g);
  }
  return goals;
}

namespace {

// The baselines only predict actions. Under the known proportional law
// u = kp_fixed (goal - x), the action implies goal = x + u / kp_fixed.
std::vector<std::vector<double>> implied_goals(const Demonstration& demo,
                                               const Tensor& u_hat, int begin,
                                               int end) {
  const double kp = meta_number(demo.meta, "kp_fixed");
  if (kp == 0.0) throw EvalError("eval: kp_fixed must be nonzero");
  std::vector<std::vector<double>> goals;
  goals.reserve(static_cast<size_t>(end - begin));
  for (int i = begin; i < end; ++i) {
    const std::vector<double>& x = demo.records[static_cast<size_t>(i)].x;
    if (static_cast<int>(x.size()) != u_hat.cols()) {
      throw ShapeError("eval: model emits " + std::to_string(u_hat.cols()) +
                       " dims, state has " + std::to_string(x.size()));
    }
    std::vector<double> g(x.size());
    for (size_t d = 0; d < x.size(); ++d) {
      g[d] = x[d] + u_hat(i - begin, static_cast<int>(d)) / kp;
    }
    goals.push_back(std::move(g));
  }
  return goals;
}

}  // namespace

std::vector<std::vector<double>> mdn_frame_goals(const MdnModel& m,
                                                 const Demonstration& demo,
                                                 int begin, int end) {
  std::tie(begin, end) = record_range(demo, begin, end);
  const int b = end - begin;
  const MdnOutput out = mdn_forward(m, obs_tensor(demo, begin, end));
  const std::vector<int> heaviest = argmax_lastdim(out.weights);
  // Mean of the heaviest component per frame.
  std::vector<double> flat(static_cast<size_t>(b) * m.out_dim);
  for (int i = 0; i < b; ++i) {
    for (int d = 0; d < m.out_dim; ++d) {
      flat[static_cast<size_t>(i) * m.out_dim + d] =
          out.means(i, heaviest[static_cast<size_t>(i)] * m.out_dim + d);
    }
  }
  const Tensor u_hat = Tensor::from_data({b, m.out_dim}, std::move(flat));
  return implied_goals(demo, u_hat, begin, end);
}

std::vector<std::vector<double>> regressor_frame_goals(
    const RegressorModel& m, const Demonstration& demo, int begin, int end) {
  std::tie(begin, end) = record_range(demo, begin, end);
  const RegressorOutput out =
      regressor_forward(m, obs_tensor(demo, begin, end));
  return implied_goals(demo, out.mean, begin, end);
}

std::vector<std::vector<double>> true_frame_goals(const Demonstration& demo,
                                                  int begin, int end) {
  std::tie(begin, end) = record_range(demo, begin, end);
  if (!demo.meta.contains("goals") || !demo.meta["goals"].is_array()) {
    throw ConfigError("eval: dataset header lacks 'goals'");
  }
  const auto goals =
      demo.meta["goals"].get<std::vector<std::vector<double>>>();
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<size_t>(end - begin));
  for (int i = begin; i < end; ++i) {
    const DemoRecord& rec = demo.records[static_cast<size_t>(i)];
    if (!rec.mode.has_value()) {
      throw EvalError("eval: record " + std::to_string(i) +
                      " has no mode label");
    }
    if (*rec.mode < 0 || *rec.mode >= static_cast<int>(goals.size())) {
      throw EvalError("eval: record " + std::to_string(i) + " labels goal " +
                      std::to_string(*rec.mode) + " of " +
                      std::to_string(goals.size()));
    }
    out.push_back(goals[static_cast<size_t>(*rec.mode)]);
  }
  return out;
}

nlohmann::json eval_report_to_json(const EvalReport& report) {
  nlohmann::json j = nlohmann::json::object();
  if (report.mean_reward) j["mean_reward"] = *report.mean_reward;
  if (report.std_reward) j["std_reward"] = *report.std_reward;
  if (report.rmse_deg) j["rmse_deg"] = *report.rmse_deg;
  if (report.purity) j["purity"] = *report.purity;
  if (!report.confusion.empty()) j["confusion"] = report.confusion;
  return j;
}

}  // namespace sdn
