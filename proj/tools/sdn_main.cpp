// Command-line surface for the identification pipeline: dataset generation,
// training, evaluation, phase maps, hybrid-system extraction, and seeded
// sweeps. Every command echoes its fully resolved settings to config.json in
// the output directory, and a re-run from that echo reproduces the outputs
// value for value.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "sdn/checkpoint.hpp"
#include "sdn/dataset.hpp"
#include "sdn/errors.hpp"
#include "sdn/evalkit.hpp"
#include "sdn/train.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;
using namespace sdn;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Command-line misuse (as opposed to failures inside the library).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Settings resolve as defaults < config file < flags. The binder remembers
// every option so the file merge only fills in flags the user did not type,
// and the echo snapshots whatever won.
class Binder {
 public:
  explicit Binder(CLI::App* cmd) : cmd_(cmd) {
    cmd_->add_option("--config", config_path_,
                     "JSON file of defaults for any flag of this command");
  }

  template <class T>
  CLI::Option* opt(const std::string& flag, const std::string& key, T* v,
                   const std::string& help) {
    CLI::Option* o = cmd_->add_option(flag, *v, help)->capture_default_str();
    remember(o, key, v);
    return o;
  }

  CLI::Option* flag(const std::string& spec, const std::string& key, bool* v,
                    const std::string& help) {
    CLI::Option* o = cmd_->add_flag(spec, *v, help);
    remember(o, key, v);
    return o;
  }

  // Applies the config file, if any. Flags given on the command line win.
  void resolve() {
    if (config_path_.empty()) return;
    std::ifstream in(config_path_);
    if (!in) throw IoError("config: cannot open '" + config_path_ + "'");
    Json file;
    try {
      file = Json::parse(in);
    } catch (const Json::exception& e) {
      throw ConfigError("config: " + std::string(e.what()));
    }
    if (!file.is_object()) throw ConfigError("config: expected a JSON object");
    for (const auto& item : file.items()) {
      if (item.key() == "command") continue;
      if (std::find(keys_.begin(), keys_.end(), item.key()) == keys_.end()) {
        throw ConfigError("config: unknown key '" + item.key() + "' for '" +
                          cmd_->get_name() + "'");
      }
    }
    for (const auto& merge : merges_) merge(file);
  }

  // Snapshot of the resolved settings, taken after any env-driven defaults
  // have been filled in.
  Json echo() const {
    Json j = Json::object();
    j["command"] = cmd_->get_name();
    for (const auto& take : echoes_) take(j);
    return j;
  }

 private:
  template <class T>
  void remember(CLI::Option* o, const std::string& key, T* v) {
    keys_.push_back(key);
    merges_.push_back([o, key, v](const Json& file) {
      if (o->count() == 0 && file.contains(key)) {
        try {
          *v = file.at(key).get<T>();
        } catch (const Json::exception&) {
          throw ConfigError("config: bad value for '" + key + "'");
        }
      }
    });
    echoes_.push_back([key, v](Json& j) { j[key] = *v; });
  }

  CLI::App* cmd_;
  std::string config_path_;
  std::vector<std::string> keys_;
  std::vector<std::function<void(const Json&)>> merges_;
  std::vector<std::function<void(Json&)>> echoes_;
};

fs::path ensure_out_dir(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    throw IoError("cannot create output directory '" + out +
                  "': " + ec.message());
  }
  return fs::path(out);
}

void write_json(const fs::path& path, const Json& doc) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

std::string format_vector(const std::vector<double>& v) {
  std::ostringstream ss;
  ss << "[";
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) ss << ", ";
    ss << v[i];
  }
  ss << "]";
  return ss.str();
}

PendulumPhysics physics_from_meta(const Json& meta) {
  PendulumPhysics ph;
  if (!meta.contains("physics") || !meta["physics"].is_object()) {
    throw ConfigError("eval: dataset header lacks 'physics'");
  }
  const Json& p = meta["physics"];
  ph.m = p.at("m").get<double>();
  ph.l = p.at("l").get<double>();
  ph.g = p.at("g").get<double>();
  ph.b = p.at("b").get<double>();
  ph.u_max = meta.at("u_max").get<double>();
  ph.dt = meta.at("dt").get<double>();
  ph.validate();
  return ph;
}

// ---------------------------------------------------------------- gen-data

struct GenOpts {
  std::string env;
  int n = 10000;
  int frames = 2000;
  uint64_t seed = 0;
  double dt = 0.05;
  int L = 10;
  std::string obs = "rendered";
  std::string out;
};

void bind_gen(Binder& b, GenOpts& o) {
  b.opt("env", "env", &o.env, "Environment: pendulum or arm");
  b.opt("--n", "n", &o.n, "Pendulum record count");
  b.opt("--frames", "frames", &o.frames, "Arm frame count");
  b.opt("--seed", "seed", &o.seed, "Generator seed");
  b.opt("--dt", "dt", &o.dt, "Simulation step");
  b.opt("--L", "L", &o.L, "History window recorded in the header");
  b.opt("--obs", "obs", &o.obs, "Arm observations: rendered or direct");
  b.opt("--out", "out", &o.out, "Output directory");
}

void run_gen_data(const GenOpts& o, const Json& echo) {
  Demonstration demo;
  if (o.env == "pendulum") {
    PendulumPhysics ph;
    ph.dt = o.dt;
    demo = generate_pendulum_dataset(o.n, ph, DemonstratorConfig{}, o.seed,
                                     150, o.L);
  } else if (o.env == "arm") {
    ArmTaskConfig cfg = default_arm_task();
    cfg.dt = o.dt;
    if (o.obs == "rendered") {
      cfg.obs = ArmObsKind::Rendered;
    } else if (o.obs == "direct") {
      cfg.obs = ArmObsKind::Direct;
    } else {
      throw UsageError("--obs must be rendered or direct");
    }
    demo = generate_arm_dataset(o.frames, cfg, o.seed, o.L);
  } else {
    throw UsageError("gen-data env must be pendulum or arm");
  }

  const fs::path dir = ensure_out_dir(o.out);
  const fs::path data = dir / "data.jsonl";
  save_demonstration(demo, data.string());
  write_json(dir / "config.json", echo);

  std::vector<long long> counts;
  for (const DemoRecord& rec : demo.records) {
    const int mode = rec.mode.value_or(-1);
    if (mode >= static_cast<int>(counts.size())) {
      counts.resize(static_cast<size_t>(mode) + 1, 0);
    }
    if (mode >= 0) ++counts[static_cast<size_t>(mode)];
  }
  std::cout << "wrote " << data.string() << ": " << demo.records.size()
            << " records\n";
  for (size_t m = 0; m < counts.size(); ++m) {
    const std::string name = o.env == "pendulum"
                                 ? pendulum_mode_name(static_cast<int>(m))
                                 : "goal " + std::to_string(m);
    std::cout << "  " << name << ": " << counts[m] << " ("
              << 100.0 * static_cast<double>(counts[m]) /
                     static_cast<double>(demo.records.size())
              << "%)\n";
  }
  if (demo.meta.contains("train_frames")) {
    std::cout << "  train split: " << demo.meta["train_frames"].get<int>()
              << " frames\n";
  }
}

// ------------------------------------------------------------------- train

struct TrainOpts {
  std::string model;
  std::string data;
  int k = 0;
  int batch_size = 64;
  int epochs = 0;  // resolved per environment when unset
  uint64_t seed = 0;
  double tau0 = 5.0;
  double tau_min = 0.5;
  double decay = 0.985;
  bool no_ce_reg = false;
  double ce_weight = 1.0;
  int L = -1;      // resolved from the dataset header when unset
  double dt = 0.0;  // likewise
  std::string out;
};

void bind_train(Binder& b, TrainOpts& o) {
  b.opt("model", "model", &o.model, "Model kind: sdn, mdn or regressor");
  b.opt("--data", "data", &o.data, "Demonstration file");
  b.opt("--k", "k", &o.k, "Switch states / mixture components (>= 2)");
  b.opt("--batch-size", "batch-size", &o.batch_size, "Minibatch size");
  b.opt("--epochs", "epochs", &o.epochs,
        "Training epochs (default 200 pendulum, 300 arm)");
  b.opt("--seed", "seed", &o.seed, "Training seed");
  b.opt("--tau0", "tau0", &o.tau0, "Initial switch temperature");
  b.opt("--tau-min", "tau-min", &o.tau_min, "Temperature floor");
  b.opt("--decay", "decay", &o.decay, "Per-epoch temperature decay");
  b.flag("--no-ce-reg", "no-ce-reg", &o.no_ce_reg,
         "Disable the batch usage regularizer");
  b.opt("--ce-weight", "ce-weight", &o.ce_weight, "Regularizer weight");
  b.opt("--L", "L", &o.L, "History window (default: dataset header)");
  b.opt("--dt", "dt", &o.dt, "Control period (default: dataset header)");
  b.opt("--out", "out", &o.out, "Output directory");
}

// Fills the env-driven defaults in place so the echo records what actually
// ran.
void resolve_train_defaults(TrainOpts& o, const Demonstration& demo) {
  if (o.model != "sdn" && o.model != "mdn" && o.model != "regressor") {
    throw UsageError("train model must be sdn, mdn or regressor");
  }
  if ((o.model == "sdn" || o.model == "mdn") && o.k < 2) {
    throw UsageError("train " + o.model + " requires --k >= 2");
  }
  const std::string env = demo.meta.value("env", std::string());
  if (o.epochs == 0) o.epochs = env == "arm" ? 300 : 200;
  if (o.L < 0) o.L = demo.meta.value("L", 10);
  if (o.dt == 0.0) o.dt = demo.meta.value("dt", 0.05);
}

TrainConfig train_config_from(const TrainOpts& o) {
  TrainConfig cfg;
  cfg.batch_size = o.batch_size;
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;
  cfg.gumbel.k = o.k > 0 ? o.k : 2;
  cfg.gumbel.tau0 = o.tau0;
  cfg.gumbel.tau_min = o.tau_min;
  cfg.gumbel.decay = o.decay;
  cfg.use_ce_reg = !o.no_ce_reg;
  cfg.ce_weight = o.ce_weight;
  cfg.L = o.L;
  cfg.dt = o.dt;
  cfg.validate();
  return cfg;
}

// One training run into `dir`; shared by train and sweep.
TrainHistory run_one_training(const std::string& model,
                              const Demonstration& demo,
                              const TrainConfig& cfg, const fs::path& dir,
                              const Json& echo) {
  // The checkpoint embeds the training settings, not the output location,
  // so re-runs into fresh directories stay byte-identical.
  Json meta = echo;
  meta.erase("out");
  Json ckpt;
  TrainHistory hist;
  if (model == "sdn") {
    auto [m, h] = train_sdn(demo, cfg);
    ckpt = sdn_to_json(m, meta);
    hist = std::move(h);
  } else if (model == "mdn") {
    auto [m, h] = train_mdn(demo, cfg);
    ckpt = mdn_to_json(m, meta);
    hist = std::move(h);
  } else {
    auto [m, h] = train_regressor(demo, cfg);
    ckpt = regressor_to_json(m, meta);
    hist = std::move(h);
  }
  save_checkpoint((dir / "checkpoint.json").string(), ckpt);
  save_history_csv(hist, (dir / "history.csv").string());
  write_json(dir / "config.json", echo);
  return hist;
}

std::string history_summary(const TrainHistory& hist) {
  const EpochStats& last = hist.epochs.back();
  double top = 0.0;
  for (double y : last.y_bar) top = std::max(top, y);
  std::ostringstream ss;
  ss << hist.epochs.size() << " epochs, " << hist.total_steps
     << " steps, final loss " << last.total << ", max usage " << top;
  return ss.str();
}

void run_train(TrainOpts& o, Binder& b) {
  if (o.data.empty()) throw UsageError("--data is required");
  const Demonstration demo = load_demonstration(o.data);
  resolve_train_defaults(o, demo);
  const fs::path dir = ensure_out_dir(o.out);
  const TrainHistory hist =
      run_one_training(o.model, demo, train_config_from(o), dir, b.echo());
  std::cout << "trained " << o.model << " on " << o.data << ": "
            << history_summary(hist) << "\n";
}

// ------------------------------------------------------------------- sweep

struct SweepOpts {
  TrainOpts train;
  int seeds = 10;
  int jobs = 1;
};

void run_sweep(SweepOpts& o, Binder& b) {
  if (o.train.data.empty()) throw UsageError("--data is required");
  if (o.seeds < 1) throw UsageError("--seeds must be >= 1");
  if (o.jobs < 1) throw UsageError("--jobs must be >= 1");
  const Demonstration demo = load_demonstration(o.train.data);
  resolve_train_defaults(o.train, demo);
  const fs::path dir = ensure_out_dir(o.train.out);
  const Json echo = b.echo();
  write_json(dir / "config.json", echo);

  // Each run gets a train-command echo of its own, so any single run can be
  // reproduced without the sweep.
  std::vector<std::string> summaries(static_cast<size_t>(o.seeds));
  std::vector<std::exception_ptr> errors(static_cast<size_t>(o.seeds));
  auto worker = [&](int first) {
    for (int i = first; i < o.seeds; i += o.jobs) {
      try {
        TrainOpts run = o.train;
        run.seed = o.train.seed + static_cast<uint64_t>(i);
        run.out = (dir / ("seed-" + std::to_string(run.seed))).string();
        Json run_echo = echo;
        run_echo["command"] = "train";
        run_echo.erase("seeds");
        run_echo.erase("jobs");
        run_echo["seed"] = run.seed;
        run_echo["out"] = run.out;
        const TrainHistory hist =
            run_one_training(run.model, demo, train_config_from(run),
                             ensure_out_dir(run.out), run_echo);
        summaries[static_cast<size_t>(i)] =
            "seed " + std::to_string(run.seed) + ": " +
            history_summary(hist);
      } catch (...) {
        errors[static_cast<size_t>(i)] = std::current_exception();
      }
    }
  };

  if (o.jobs == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < o.jobs; ++j) pool.emplace_back(worker, j);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const std::string& line : summaries) std::cout << line << "\n";
}

// -------------------------------------------------------------------- eval

struct EvalOpts {
  std::string checkpoint;
  std::string data;
  std::string env;
  int episodes = 1000;
  int horizon = 500;
  uint64_t seed = 0;
  int L = -1;
  double dt = 0.0;
  std::string out;
};

void bind_eval(Binder& b, EvalOpts& o) {
  b.opt("--checkpoint", "checkpoint", &o.checkpoint, "Model checkpoint");
  b.opt("--data", "data", &o.data, "Demonstration file to evaluate against");
  b.opt("--env", "env", &o.env, "Environment rollout without data: pendulum");
  b.opt("--episodes", "episodes", &o.episodes, "Rollout episodes");
  b.opt("--horizon", "horizon", &o.horizon, "Rollout steps per episode");
  b.opt("--seed", "seed", &o.seed, "Rollout seed");
  b.opt("--L", "L", &o.L, "History window (default: training echo)");
  b.opt("--dt", "dt", &o.dt, "Control period (default: training echo)");
  b.opt("--out", "out", &o.out, "Output directory");
}

// The training echo stored in the checkpoint carries the window settings the
// model was fit with; flags override, bare defaults back them up.
void resolve_window(const Json& doc, int* L, double* dt) {
  const Json meta = doc.value("training_meta", Json::object());
  if (*L < 0) *L = meta.value("L", 10);
  if (*dt == 0.0) *dt = meta.value("dt", 0.05);
}

EvalReport eval_pendulum(const Json& doc, const PendulumPhysics& ph,
                         const EvalOpts& o, int L, double dt) {
  EvalReport report;
  const std::string kind = checkpoint_kind(doc);
  RolloutStats stats;
  if (kind == "sdn") {
    const SdnModel m = sdn_from_json(doc);
    SdnPendulumPolicy policy(m, L, dt);
    stats = rollout(policy, ph, o.episodes, o.horizon, o.seed);

    // Grid agreement against the scripted teacher's own mode choices.
    const auto thetas = linspace(-kPi, kPi, 101, false);
    const auto omegas = linspace(-8.0, 8.0, 101, true);
    const auto grid = phase_map(m, thetas, omegas, dt);
    std::vector<int> pred, truth;
    pred.reserve(grid.size());
    truth.reserve(grid.size());
    const DemonstratorConfig demo_cfg;
    for (const PhaseMapRecord& rec : grid) {
      pred.push_back(rec.mode);
      PendulumState s;
      s.theta = rec.theta;
      s.omega = rec.omega;
      truth.push_back(demonstrator_action(s, ph, demo_cfg).mode);
    }
    const PurityReport purity =
        switch_purity(pred, truth, m.head.k, kPendulumModes);
    report.purity = purity.purity;
    report.confusion = purity.confusion;
  } else if (kind == "mdn") {
    const MdnModel m = mdn_from_json(doc);
    MdnPendulumPolicy policy(m);
    stats = rollout(policy, ph, o.episodes, o.horizon, o.seed);
  } else {
    const RegressorModel m = regressor_from_json(doc);
    RegressorPendulumPolicy policy(m);
    stats = rollout(policy, ph, o.episodes, o.horizon, o.seed);
  }
  report.mean_reward = stats.mean_reward;
  report.std_reward = stats.std_reward;
  return report;
}

EvalReport eval_arm(const Json& doc, const Demonstration& demo) {
  const std::string kind = checkpoint_kind(doc);
  const int obs_dim = static_cast<int>(demo.records.at(0).z.size());
  const int begin = demo.meta.value("train_frames", 0);
  if (begin >= static_cast<int>(demo.records.size())) {
    throw EvalError("eval: dataset has no frames past the training split");
  }
  const auto truth_goals = true_frame_goals(demo, begin);
  std::vector<int> truth_modes;
  for (size_t i = static_cast<size_t>(begin); i < demo.records.size(); ++i) {
    truth_modes.push_back(*demo.records[i].mode);
  }
  const int n_goals = static_cast<int>(demo.meta.at("goals").size());

  auto check_obs = [&](int input_dim) {
    if (input_dim != obs_dim) {
      throw EvalError("eval: checkpoint expects " + std::to_string(input_dim) +
                      "-dim observations, dataset provides " +
                      std::to_string(obs_dim));
    }
  };

  EvalReport report;
  std::vector<std::vector<double>> goals;
  std::vector<int> modes;
  int n_modes = 0;
  if (kind == "sdn") {
    const SdnModel m = sdn_from_json(doc);
    check_obs(m.trunk.input_dim);
    goals = sdn_frame_goals(m, demo, begin);
    modes = sdn_frame_modes(m, demo, begin);
    n_modes = m.head.k;
  } else if (kind == "mdn") {
    const MdnModel m = mdn_from_json(doc);
    check_obs(m.trunk.input_dim);
    goals = mdn_frame_goals(m, demo, begin);
    modes = mdn_frame_modes(m, demo, begin);
    n_modes = m.k;
  } else {
    const RegressorModel m = regressor_from_json(doc);
    check_obs(m.trunk.input_dim);
    goals = regressor_frame_goals(m, demo, begin);
  }

  report.rmse_deg = goal_rmse(goals, truth_goals).rmse_deg;
  if (!modes.empty()) {
    const PurityReport purity =
        switch_purity(modes, truth_modes, n_modes, n_goals);
    report.purity = purity.purity;
    report.confusion = purity.confusion;
  }
  return report;
}

void run_eval(EvalOpts& o, Binder& b) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  const Json doc = load_checkpoint(o.checkpoint);
  resolve_window(doc, &o.L, &o.dt);

  EvalReport report;
  if (!o.data.empty()) {
    const Demonstration demo = load_demonstration(o.data);
    const std::string env = demo.meta.value("env", std::string());
    if (env == "arm") {
      report = eval_arm(doc, demo);
    } else if (env == "pendulum") {
      report = eval_pendulum(doc, physics_from_meta(demo.meta), o, o.L, o.dt);
    } else {
      throw EvalError("eval: dataset env '" + env + "' is not evaluable");
    }
  } else if (o.env == "pendulum") {
    report = eval_pendulum(doc, PendulumPhysics{}, o, o.L, o.dt);
  } else if (o.env.empty()) {
    throw UsageError("eval needs --data or --env pendulum");
  } else {
    throw UsageError("eval --env supports pendulum only; use --data for the "
                     "arm task");
  }

  const fs::path dir = ensure_out_dir(o.out);
  write_json(dir / "report.json", eval_report_to_json(report));
  write_json(dir / "config.json", b.echo());
  if (report.mean_reward) {
    std::cout << "mean_reward " << *report.mean_reward << " +- "
              << *report.std_reward << "\n";
  }
  if (report.rmse_deg) std::cout << "rmse_deg " << *report.rmse_deg << "\n";
  if (report.purity) std::cout << "purity " << *report.purity << "\n";
}

// --------------------------------------------------------------- phase-map

struct MapOpts {
  std::string checkpoint;
  double dt = 0.0;
  std::string out;
};

void run_phase_map(MapOpts& o, Binder& b) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  const Json doc = load_checkpoint(o.checkpoint);
  if (checkpoint_kind(doc) != "sdn") {
    throw EvalError("phase-map: checkpoint kind '" + checkpoint_kind(doc) +
                    "' has no switch regions; train an sdn model");
  }
  int L_unused = 0;
  resolve_window(doc, &L_unused, &o.dt);
  const SdnModel m = sdn_from_json(doc);
  if (m.trunk.input_dim != 2) {
    throw EvalError(
        "phase-map: checkpoint is not a pendulum model (expects " +
        std::to_string(m.trunk.input_dim) + "-dim observations)");
  }

  const auto records = phase_map(m, linspace(-kPi, kPi, 101, false),
                                 linspace(-8.0, 8.0, 101, true), o.dt);
  const fs::path dir = ensure_out_dir(o.out);
  save_phase_map_csv(records, (dir / "phase_map.csv").string());
  write_json(dir / "config.json", b.echo());

  std::vector<long long> counts(static_cast<size_t>(m.head.k), 0);
  for (const PhaseMapRecord& rec : records) {
    ++counts[static_cast<size_t>(rec.mode)];
  }
  std::cout << "wrote " << (dir / "phase_map.csv").string() << ": "
            << records.size() << " points\n";
  for (size_t k = 0; k < counts.size(); ++k) {
    std::cout << "  mode " << k << ": " << counts[k] << " ("
              << 100.0 * static_cast<double>(counts[k]) /
                     static_cast<double>(records.size())
              << "%)\n";
  }
}

// ----------------------------------------------------------------- extract

struct ExtractOpts {
  std::string checkpoint;
  std::string out;
};

void run_extract(const ExtractOpts& o, Binder& b) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  const Json doc = load_checkpoint(o.checkpoint);
  if (checkpoint_kind(doc) != "sdn") {
    throw EvalError("extract: checkpoint kind '" + checkpoint_kind(doc) +
                    "' has no hybrid system; train an sdn model");
  }
  const SdnModel m = sdn_from_json(doc);
  const std::vector<PidParams> table = extract_hybrid_system(m);

  std::cout << "mode\tkp\tki\tkd\tmu\tsigma\n";
  Json rows = Json::array();
  for (const PidParams& p : table) {
    std::vector<double> sigma(p.sigma_diag.size());
    for (size_t d = 0; d < sigma.size(); ++d) {
      sigma[d] = std::sqrt(p.sigma_diag[d]);
    }
    std::cout << p.mode_id << "\t" << format_vector(p.kp) << "\t"
              << format_vector(p.ki) << "\t" << format_vector(p.kd) << "\t"
              << format_vector(p.mu) << "\t" << format_vector(sigma) << "\n";
    rows.push_back(Json{{"mode", p.mode_id},
                        {"kp", p.kp},
                        {"ki", p.ki},
                        {"kd", p.kd},
                        {"mu", p.mu},
                        {"sigma", sigma}});
  }
  if (!o.out.empty()) {
    const fs::path dir = ensure_out_dir(o.out);
    write_json(dir / "hybrid_system.json", rows);
    write_json(dir / "config.json", b.echo());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Switching-controller identification from demonstrations"};
  app.require_subcommand(1);

  GenOpts gen;
  Binder gen_b(app.add_subcommand("gen-data", "Generate a demonstration set"));
  bind_gen(gen_b, gen);

  TrainOpts train;
  Binder train_b(app.add_subcommand("train", "Fit a model to demonstrations"));
  bind_train(train_b, train);

  SweepOpts sweep;
  Binder sweep_b(
      app.add_subcommand("sweep", "Run one training per seed offset"));
  bind_train(sweep_b, sweep.train);
  sweep_b.opt("--seeds", "seeds", &sweep.seeds, "Number of seeded runs");
  sweep_b.opt("--jobs", "jobs", &sweep.jobs, "Concurrent workers");

  EvalOpts eval;
  Binder eval_b(app.add_subcommand("eval", "Score a checkpoint"));
  bind_eval(eval_b, eval);

  MapOpts map;
  Binder map_b(
      app.add_subcommand("phase-map", "Export the switch-region grid"));
  map_b.opt("--checkpoint", "checkpoint", &map.checkpoint, "Model checkpoint");
  map_b.opt("--dt", "dt", &map.dt, "Control period (default: training echo)");
  map_b.opt("--out", "out", &map.out, "Output directory");

  ExtractOpts extract;
  Binder extract_b(
      app.add_subcommand("extract", "Print the identified control laws"));
  extract_b.opt("--checkpoint", "checkpoint", &extract.checkpoint,
                "Model checkpoint");
  extract_b.opt("--out", "out", &extract.out,
                "Optional directory for hybrid_system.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.get_subcommand("gen-data")->parsed()) {
      gen_b.resolve();
      run_gen_data(gen, gen_b.echo());
    } else if (app.get_subcommand("train")->parsed()) {
      train_b.resolve();
      run_train(train, train_b);
    } else if (app.get_subcommand("sweep")->parsed()) {
      sweep_b.resolve();
      run_sweep(sweep, sweep_b);
    } else if (app.get_subcommand("eval")->parsed()) {
      eval_b.resolve();
      run_eval(eval, eval_b);
    } else if (app.get_subcommand("phase-map")->parsed()) {
      map_b.resolve();
      run_phase_map(map, map_b);
    } else if (app.get_subcommand("extract")->parsed()) {
      extract_b.resolve();
      run_extract(extract, extract_b);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: shape: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "error: numeric: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: parse: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return 1;
  } catch (const EvalError& e) {
    std::cerr << "error: eval: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
