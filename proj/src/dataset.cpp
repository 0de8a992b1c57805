#include "sdn/dataset.hpp"

#include <cmath>
#include <fstream>

#include "sdn/errors.hpp"

namespace sdn {

using Json = nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kGoalTolerance = kPi / 180.0;  // 1 degree, max-norm

void check_generation_args(int count, int horizon, int window, double dt) {
  if (count < 1) throw ConfigError("dataset: need at least one record");
  if (horizon < 1) throw ConfigError("dataset: horizon must be >= 1");
  if (window < 0) throw ConfigError("dataset: window must be >= 0");
  if (!(dt > 0.0)) throw ConfigError("dataset: dt must be positive");
}

}  // namespace

Demonstration generate_pendulum_dataset(int n_pairs,
                                        const PendulumPhysics& physics,
                                        const DemonstratorConfig& cfg,
                                        uint64_t seed, int horizon,
                                        int window) {
  check_generation_args(n_pairs, horizon, window, physics.dt);
  physics.validate();
  cfg.validate();

  Demonstration demo;
  demo.records.reserve(n_pairs);

  const int episodes = (n_pairs + horizon - 1) / horizon;
  int failures = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    Rng rng(seed + static_cast<uint64_t>(ep));
    PendulumState s;
    s.theta = rng.uniform(-kPi, kPi);
    s.omega = rng.uniform(-1.0, 1.0);

    int last_mode = kModePump;
    for (int k = 0; k < horizon; ++k) {
      const DemonstratorAction a = demonstrator_action(s, physics, cfg);
      last_mode = a.mode;
      if (static_cast<int>(demo.records.size()) < n_pairs) {
        DemoRecord rec;
        rec.t = physics.dt * static_cast<double>(demo.records.size());
        rec.x = {s.theta, s.omega};
        rec.u = {a.u};
        rec.z = rec.x;
        rec.mode = a.mode;
        demo.records.push_back(std::move(rec));
      }
      s = pendulum_step(s, a.u, physics);
    }
    if (last_mode != kModeBalance) ++failures;
  }

  if (failures * 5 > episodes) {
    throw ConfigError(
        "dataset: demonstrator missed balance on " + std::to_string(failures) +
        " of " + std::to_string(episodes) +
        " episodes; retune DemonstratorConfig before generating data");
  }

  demo.meta = Json{{"env", "pendulum"},
                   {"seed", seed},
                   {"dt", physics.dt},
                   {"L", window},
                   {"episode_horizon", horizon},
                   {"pid_dims", Json::array({0})},
                   {"pid_angular", Json::array({true})},
                   {"u_max", physics.u_max},
                   {"physics", Json{{"m", physics.m},
                                    {"l", physics.l},
                                    {"g", physics.g},
                                    {"b", physics.b}}}};
  return demo;
}

Demonstration generate_arm_dataset(int n_frames, const ArmTaskConfig& cfg,
                                   uint64_t seed, int window) {
  check_generation_args(n_frames, n_frames, window, cfg.dt);
  cfg.validate();

  Rng rng(seed);
  std::vector<double> x(cfg.n_joints, 0.0);
  size_t goal_idx = 0;

  Demonstration demo;
  demo.records.reserve(n_frames);
  for (int k = 0; k < n_frames; ++k) {
    // Advance the target once the arm has settled on the current one, so
    // the recorded action always pulls toward the labelled goal.
    double err = 0.0;
    for (int d = 0; d < cfg.n_joints; ++d) {
      err = std::max(err, std::abs(x[d] - cfg.goals[goal_idx][d]));
    }
    if (err < kGoalTolerance) goal_idx = (goal_idx + 1) % cfg.goals.size();

    std::vector<double> u(cfg.n_joints);
    for (int d = 0; d < cfg.n_joints; ++d) {
      u[d] = cfg.kp_fixed * (cfg.goals[goal_idx][d] - x[d]) +
             rng.normal(0.0, cfg.process_noise_std);
    }

    DemoRecord rec;
    rec.t = cfg.dt * static_cast<double>(k);
    rec.x = x;
    rec.u = u;
    rec.z = arm_render(x, cfg, &rng);
    rec.mode = static_cast<int>(goal_idx);
    demo.records.push_back(std::move(rec));

    for (int d = 0; d < cfg.n_joints; ++d) x[d] += u[d] * cfg.dt;
  }

  Json goals = Json::array();
  for (const auto& g : cfg.goals) goals.push_back(g);
  Json pid_dims = Json::array();
  Json pid_angular = Json::array();
  for (int d = 0; d < cfg.n_joints; ++d) {
    pid_dims.push_back(d);
    pid_angular.push_back(false);
  }
  demo.meta =
      Json{{"env", "arm"},
           {"seed", seed},
           {"dt", cfg.dt},
           {"L", window},
           {"episode_horizon", n_frames},
           {"pid_dims", std::move(pid_dims)},
           {"pid_angular", std::move(pid_angular)},
           {"n_joints", cfg.n_joints},
           {"goals", std::move(goals)},
           {"kp_fixed", cfg.kp_fixed},
           {"obs", cfg.obs == ArmObsKind::Rendered ? "rendered" : "direct"},
           {"render_h", cfg.render_h},
           {"render_w", cfg.render_w},
           {"noise_std", cfg.noise_std},
           {"process_noise_std", cfg.process_noise_std},
           {"train_frames", n_frames / 2}};
  return demo;
}

namespace {

std::vector<double> vector_field(const Json& rec, const char* key,
                                 long line) {
  const auto it = rec.find(key);
  if (it == rec.end() || !it->is_array()) {
    throw ParseError(std::string("dataset: record needs array field '") +
                         key + "'",
                     line);
  }
  std::vector<double> out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_number()) {
      throw ParseError(std::string("dataset: non-numeric entry in '") + key +
                           "'",
                       line);
    }
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

void save_demonstration(const Demonstration& demo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("dataset: cannot open '" + path + "' for writing");
  out << Json{{"meta", demo.meta}}.dump() << "\n";
  for (const auto& rec : demo.records) {
    Json j{{"t", rec.t}, {"x", rec.x}, {"u", rec.u}, {"z", rec.z}};
    j["mode"] = rec.mode.has_value() ? Json(*rec.mode) : Json(nullptr);
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("dataset: short write to '" + path + "'");
}

Demonstration load_demonstration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("dataset: cannot open '" + path + "'");

  Demonstration demo;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(std::string("dataset: ") + e.what(), line_no);
    }

    if (line_no == 1) {
      if (!j.contains("meta") || !j["meta"].is_object()) {
        throw ParseError("dataset: first line must be the meta header",
                         line_no);
      }
      demo.meta = j["meta"];
      continue;
    }

    DemoRecord rec;
    if (!j.contains("t") || !j["t"].is_number()) {
      throw ParseError("dataset: record needs numeric field 't'", line_no);
    }
    rec.t = j["t"].get<double>();
    rec.x = vector_field(j, "x", line_no);
    rec.u = vector_field(j, "u", line_no);
    rec.z = vector_field(j, "z", line_no);
    const auto mode = j.find("mode");
    if (mode == j.end()) {
      throw ParseError("dataset: record needs field 'mode' (int or null)",
                       line_no);
    }
    if (!mode->is_null()) {
      if (!mode->is_number_integer()) {
        throw ParseError("dataset: 'mode' must be an integer or null",
                         line_no);
      }
      rec.mode = mode->get<int>();
    }

    if (!demo.records.empty()) {
      const auto& prev = demo.records.back();
      if (!(rec.t > prev.t)) {
        throw ParseError("dataset: record times must strictly increase",
                         line_no);
      }
      if (rec.x.size() != prev.x.size() || rec.u.size() != prev.u.size() ||
          rec.z.size() != prev.z.size()) {
        throw ParseError("dataset: record dimensions changed mid-file",
                         line_no);
      }
    }
    demo.records.push_back(std::move(rec));
  }

  if (line_no == 0) throw ParseError("dataset: empty file", 1);
  return demo;
}

}  // namespace sdn
