#include "sdn/checkpoint.hpp"

#include <fstream>

#include "sdn/errors.hpp"

namespace sdn {

namespace {

constexpr int kFormatVersion = 1;

Json matrix_to_json(const Tensor& t) {
  Json rows = Json::array();
  for (int r = 0; r < t.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Tensor matrix_from_json(const Json& j, const std::string& who) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw IoError("checkpoint: " + who + " must be a nested array");
  }
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  std::vector<double> data;
  data.reserve(static_cast<size_t>(rows) * cols);
  for (const auto& row : j) {
    if (static_cast<int>(row.size()) != cols) {
      throw IoError("checkpoint: " + who + " rows are ragged");
    }
    for (const auto& v : row) data.push_back(v.get<double>());
  }
  return Tensor::from_data({rows, cols}, std::move(data), true);
}

Json bias_to_json(const Tensor& t) {
  Json out = Json::array();
  for (long long i = 0; i < t.size(); ++i) out.push_back(t[i]);
  return out;
}

Tensor bias_from_json(const Json& j, const std::string& who) {
  if (!j.is_array()) throw IoError("checkpoint: " + who + " must be an array");
  std::vector<double> data;
  for (const auto& v : j) data.push_back(v.get<double>());
  // Read the length before std::move: argument evaluation order is
  // unspecified, and the moved-from vector would report size 0.
  const int n = static_cast<int>(data.size());
  return Tensor::from_data({1, n}, std::move(data), true);
}

Json trunk_to_json(const TrunkConfig& t) {
  return Json{{"input_dim", t.input_dim},
              {"hidden", t.hidden},
              {"activation", t.activation}};
}

TrunkConfig trunk_from_json(const Json& j) {
  TrunkConfig t;
  t.input_dim = j.at("input_dim").get<int>();
  t.hidden = j.at("hidden").get<std::vector<int>>();
  t.activation = j.at("activation").get<std::string>();
  t.validate();
  return t;
}

Json layers_to_json(const std::vector<Tensor>& w,
                    const std::vector<Tensor>& b) {
  Json out = Json::array();
  for (size_t i = 0; i < w.size(); ++i) {
    out.push_back(Json{{"w", matrix_to_json(w[i])}, {"b", bias_to_json(b[i])}});
  }
  return out;
}

void layers_from_json(const Json& j, std::vector<Tensor>& w,
                      std::vector<Tensor>& b) {
  if (!j.is_array()) throw IoError("checkpoint: layers must be an array");
  int idx = 0;
  for (const auto& layer : j) {
    const std::string who = "layer " + std::to_string(idx++);
    w.push_back(matrix_from_json(layer.at("w"), who + " w"));
    b.push_back(bias_from_json(layer.at("b"), who + " b"));
  }
}

Json head_to_json(const HeadSpec& h) {
  Json layout = Json::array();
  for (const auto& blk : h.layout) {
    Json b{{"block", block_name(blk.kind)},
           {"dim", blk.dim},
           {"learned", blk.learned}};
    if (!blk.learned) b["fixed"] = blk.fixed;
    layout.push_back(std::move(b));
  }
  return Json{{"k", h.k}, {"layout", std::move(layout)}};
}

HeadSpec head_from_json(const Json& j) {
  HeadSpec h;
  h.k = j.at("k").get<int>();
  for (const auto& b : j.at("layout")) {
    ParamBlock blk;
    blk.kind = block_from_name(b.at("block").get<std::string>());
    blk.dim = b.at("dim").get<int>();
    blk.learned = b.at("learned").get<bool>();
    if (!blk.learned) blk.fixed = b.at("fixed").get<std::vector<double>>();
    h.layout.push_back(std::move(blk));
  }
  h.validate();
  return h;
}

Json gumbel_to_json(const GumbelConfig& g) {
  return Json{{"k", g.k},
              {"tau0", g.tau0},
              {"decay", g.decay},
              {"tau_min", g.tau_min},
              {"straight_through", g.straight_through}};
}

GumbelConfig gumbel_from_json(const Json& j) {
  GumbelConfig g;
  g.k = j.at("k").get<int>();
  g.tau0 = j.at("tau0").get<double>();
  g.decay = j.at("decay").get<double>();
  g.tau_min = j.at("tau_min").get<double>();
  g.straight_through = j.at("straight_through").get<bool>();
  g.validate();
  return g;
}

void check_version_kind(const Json& doc, const std::string& kind) {
  if (doc.at("format_version").get<int>() != kFormatVersion) {
    throw IoError("checkpoint: unsupported format_version");
  }
  const std::string found = doc.at("kind").get<std::string>();
  if (found != kind) {
    throw ConfigError("checkpoint: holds a '" + found + "' model, not '" +
                      kind + "'");
  }
}

void check_trunk_shapes(const TrunkConfig& cfg, const std::vector<Tensor>& w,
                        const std::vector<Tensor>& b) {
  if (w.size() != cfg.hidden.size() || b.size() != cfg.hidden.size()) {
    throw IoError("checkpoint: layer count disagrees with trunk_cfg");
  }
  int in = cfg.input_dim;
  for (size_t i = 0; i < w.size(); ++i) {
    if (w[i].shape() != Shape{in, cfg.hidden[i]} ||
        b[i].cols() != cfg.hidden[i]) {
      throw IoError("checkpoint: layer " + std::to_string(i) +
                    " shape disagrees with trunk_cfg");
    }
    in = cfg.hidden[i];
  }
}

}  // namespace

Json sdn_to_json(const SdnModel& m, Json training_meta) {
  return Json{{"format_version", kFormatVersion},
              {"kind", "sdn"},
              {"trunk_cfg", trunk_to_json(m.trunk)},
              {"head_spec", head_to_json(m.head)},
              {"gumbel_cfg", gumbel_to_json(m.gumbel)},
              {"layers", layers_to_json(m.layer_w, m.layer_b)},
              {"logit_layer", Json{{"w", matrix_to_json(m.logit_w)},
                                   {"b", bias_to_json(m.logit_b)}}},
              {"final_w", matrix_to_json(m.final_w)},
              {"rng_seed", m.rng_seed},
              {"training_meta", std::move(training_meta)}};
}

SdnModel sdn_from_json(const Json& doc) {
  check_version_kind(doc, "sdn");
  SdnModel m;
  m.trunk = trunk_from_json(doc.at("trunk_cfg"));
  m.head = head_from_json(doc.at("head_spec"));
  m.gumbel = gumbel_from_json(doc.at("gumbel_cfg"));
  if (m.head.k != m.gumbel.k) {
    throw IoError("checkpoint: head k disagrees with switch k");
  }
  layers_from_json(doc.at("layers"), m.layer_w, m.layer_b);
  check_trunk_shapes(m.trunk, m.layer_w, m.layer_b);
  m.logit_w = matrix_from_json(doc.at("logit_layer").at("w"), "logit w");
  m.logit_b = bias_from_json(doc.at("logit_layer").at("b"), "logit b");
  m.final_w = matrix_from_json(doc.at("final_w"), "final_w");
  const int feat = m.trunk.hidden.back();
  if (m.logit_w.shape() != Shape{feat, m.head.k} ||
      m.logit_b.cols() != m.head.k) {
    throw IoError("checkpoint: logit layer shape mismatch");
  }
  if (m.final_w.shape() != Shape{m.head.k, m.head.param_width()}) {
    throw IoError("checkpoint: final_w shape mismatch");
  }
  m.rng_seed = doc.at("rng_seed").get<uint64_t>();
  return m;
}

Json mdn_to_json(const MdnModel& m, Json training_meta) {
  return Json{{"format_version", kFormatVersion},
              {"kind", "mdn"},
              {"trunk_cfg", trunk_to_json(m.trunk)},
              {"k", m.k},
              {"out_dim", m.out_dim},
              {"layers", layers_to_json(m.layer_w, m.layer_b)},
              {"mean_layer", Json{{"w", matrix_to_json(m.mean_w)},
                                  {"b", bias_to_json(m.mean_b)}}},
              {"log_var_layer", Json{{"w", matrix_to_json(m.log_var_w)},
                                     {"b", bias_to_json(m.log_var_b)}}},
              {"weight_layer", Json{{"w", matrix_to_json(m.weight_w)},
                                    {"b", bias_to_json(m.weight_b)}}},
              {"rng_seed", m.rng_seed},
              {"training_meta", std::move(training_meta)}};
}

MdnModel mdn_from_json(const Json& doc) {
  check_version_kind(doc, "mdn");
  MdnModel m;
  m.trunk = trunk_from_json(doc.at("trunk_cfg"));
  m.k = doc.at("k").get<int>();
  m.out_dim = doc.at("out_dim").get<int>();
  if (m.k < 1 || m.out_dim < 1) {
    throw IoError("checkpoint: k and out_dim must be positive");
  }
  layers_from_json(doc.at("layers"), m.layer_w, m.layer_b);
  check_trunk_shapes(m.trunk, m.layer_w, m.layer_b);
  m.mean_w = matrix_from_json(doc.at("mean_layer").at("w"), "mean w");
  m.mean_b = bias_from_json(doc.at("mean_layer").at("b"), "mean b");
  m.log_var_w = matrix_from_json(doc.at("log_var_layer").at("w"), "log_var w");
  m.log_var_b = bias_from_json(doc.at("log_var_layer").at("b"), "log_var b");
  m.weight_w = matrix_from_json(doc.at("weight_layer").at("w"), "weight w");
  m.weight_b = bias_from_json(doc.at("weight_layer").at("b"), "weight b");
  const int feat = m.trunk.hidden.back();
  if (m.mean_w.shape() != Shape{feat, m.k * m.out_dim} ||
      m.log_var_w.shape() != Shape{feat, m.k * m.out_dim} ||
      m.weight_w.shape() != Shape{feat, m.k}) {
    throw IoError("checkpoint: mixture head shape mismatch");
  }
  m.rng_seed = doc.at("rng_seed").get<uint64_t>();
  return m;
}

Json regressor_to_json(const RegressorModel& m, Json training_meta) {
  return Json{{"format_version", kFormatVersion},
              {"kind", "regressor"},
              {"trunk_cfg", trunk_to_json(m.trunk)},
              {"out_dim", m.out_dim},
              {"layers", layers_to_json(m.layer_w, m.layer_b)},
              {"out_layer", Json{{"w", matrix_to_json(m.out_w)},
                                 {"b", bias_to_json(m.out_b)}}},
              {"log_var", bias_to_json(m.log_var)},
              {"rng_seed", m.rng_seed},
              {"training_meta", std::move(training_meta)}};
}

RegressorModel regressor_from_json(const Json& doc) {
  check_version_kind(doc, "regressor");
  RegressorModel m;
  m.trunk = trunk_from_json(doc.at("trunk_cfg"));
  m.out_dim = doc.at("out_dim").get<int>();
  if (m.out_dim < 1) throw IoError("checkpoint: out_dim must be positive");
  layers_from_json(doc.at("layers"), m.layer_w, m.layer_b);
  check_trunk_shapes(m.trunk, m.layer_w, m.layer_b);
  m.out_w = matrix_from_json(doc.at("out_layer").at("w"), "out w");
  m.out_b = bias_from_json(doc.at("out_layer").at("b"), "out b");
  m.log_var = bias_from_json(doc.at("log_var"), "log_var");
  if (m.out_w.shape() != Shape{m.trunk.hidden.back(), m.out_dim} ||
      m.log_var.cols() != m.out_dim) {
    throw IoError("checkpoint: output head shape mismatch");
  }
  m.rng_seed = doc.at("rng_seed").get<uint64_t>();
  return m;
}

void save_checkpoint(const std::string& path, const Json& doc) {
  std::ofstream out(path);
  if (!out) throw IoError("checkpoint: cannot open '" + path + "' for write");
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("checkpoint: write to '" + path + "' failed");
}

Json load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw IoError("checkpoint: '" + path + "' is not valid JSON: " + e.what());
  }
}

std::string checkpoint_kind(const Json& doc) {
  try {
    return doc.at("kind").get<std::string>();
  } catch (const Json::exception&) {
    throw IoError("checkpoint: missing 'kind' field");
  }
}

}  // namespace sdn
