#include "atrim/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

namespace atrim {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "atrim-checkpoint";
constexpr int kVersion = 1;

/// Tracks which keys of one JSON object were consumed and rejects leftovers.
class StrictReader {
 public:
  StrictReader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw std::runtime_error(context_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    if (auto it = j_.find(key); it != j_.end()) {
      out = it->get<T>();
    }
    seen_.insert(key);
  }

  const json* subobject(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw std::runtime_error(context_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

RimConfig rim_config_from_json(const json& j) {
  RimConfig r;
  StrictReader read(j, "rim config");
  read.read("units", r.units);
  read.read("num_modules_total", r.num_modules_total);
  read.read("num_modules_active", r.num_modules_active);
  read.read("input_heads", r.input_heads);
  read.read("input_key_size", r.input_key_size);
  read.read("input_value_size", r.input_value_size);
  read.read("input_query_size", r.input_query_size);
  read.read("input_keep_prob", r.input_keep_prob);
  read.read("comm_heads", r.comm_heads);
  read.read("comm_key_size", r.comm_key_size);
  read.read("comm_value_size", r.comm_value_size);
  read.read("comm_query_size", r.comm_query_size);
  read.read("comm_keep_prob", r.comm_keep_prob);
  read.read("include_self_in_comm", r.include_self_in_comm);
  read.finish();
  return r;
}

json rim_config_to_json(const RimConfig& r) {
  return json{{"units", r.units},
              {"num_modules_total", r.num_modules_total},
              {"num_modules_active", r.num_modules_active},
              {"input_heads", r.input_heads},
              {"input_key_size", r.input_key_size},
              {"input_value_size", r.input_value_size},
              {"input_query_size", r.input_query_size},
              {"input_keep_prob", r.input_keep_prob},
              {"comm_heads", r.comm_heads},
              {"comm_key_size", r.comm_key_size},
              {"comm_value_size", r.comm_value_size},
              {"comm_query_size", r.comm_query_size},
              {"comm_keep_prob", r.comm_keep_prob},
              {"include_self_in_comm", r.include_self_in_comm}};
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  StrictReader read(j, "model config");
  read.read("kind", cfg.kind);
  read.read("lookback", cfg.lookback);
  read.read("horizon", cfg.horizon);
  read.read("features", cfg.features);
  read.read("units", cfg.units);
  read.read("dropout", cfg.dropout);
  read.read("alpha", cfg.alpha);
  if (const json* rim = read.subobject("rim")) cfg.rim = rim_config_from_json(*rim);
  read.finish();
  cfg.validate();
  return cfg;
}

json model_config_to_json(const ModelConfig& cfg) {
  json j{{"kind", cfg.kind},       {"lookback", cfg.lookback}, {"horizon", cfg.horizon},
         {"features", cfg.features}, {"units", cfg.units},     {"dropout", cfg.dropout},
         {"alpha", cfg.alpha}};
  if (cfg.kind == "alpha_t_rim") j["rim"] = rim_config_to_json(cfg.rim);
  return j;
}

TrainOptions train_options_from_json(const json& j) {
  TrainOptions o;
  StrictReader read(j, "train options");
  read.read("epochs", o.epochs);
  read.read("batch_size", o.batch_size);
  read.read("learning_rate", o.learning_rate);
  read.read("l1_weight", o.l1_weight);
  read.read("early_stop", o.early_stop);
  read.read("patience", o.patience);
  read.read("seed", o.seed);
  read.finish();
  return o;
}

json hyper_to_json(const HyperDict& h) {
  return json{{"units", h.units},
              {"num_rims", h.num_rims},
              {"k_modules", h.k_modules},
              {"input_key_size", h.input_key_size},
              {"input_value_size", h.input_value_size},
              {"input_query_size", h.input_query_size},
              {"input_keep_prob", h.input_keep_prob},
              {"comm_heads", h.comm_heads},
              {"comm_key_size", h.comm_key_size},
              {"comm_value_size", h.comm_value_size},
              {"comm_query_size", h.comm_query_size},
              {"comm_keep_prob", h.comm_keep_prob},
              {"hidden_units", h.hidden_units},
              {"l1_weight", h.l1_weight},
              {"dropout", h.dropout}};
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  const json j = json::parse(in);
  RunConfig cfg;
  StrictReader read(j, path);
  if (const json* model = read.subobject("model")) cfg.model = model_config_from_json(*model);
  if (const json* train = read.subobject("train")) cfg.train = train_options_from_json(*train);
  read.finish();
  return cfg;
}

void save_checkpoint(const std::string& path, const Forecaster& model, const ModelConfig& cfg,
                     std::uint64_t seed) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["kind"] = cfg.kind;
  j["seed"] = seed;
  j["config"] = model_config_to_json(cfg);
  json tensors = json::object();
  for (const ParamRegistry::Entry& e : model.registry().entries()) {
    const Index n = e.rows * e.cols;
    tensors[e.name] = json{{"rows", e.rows},
                           {"cols", e.cols},
                           {"data", std::vector<double>(e.data, e.data + n)}};
  }
  j["tensors"] = std::move(tensors);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << j.dump(2) << "\n";
}

LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  const json j = json::parse(in);

  if (j.value("format", "") != kFormat) {
    throw std::runtime_error(path + ": not a checkpoint file");
  }
  if (j.value("version", -1) != kVersion) {
    throw std::runtime_error(path + ": unsupported checkpoint version");
  }

  LoadedModel loaded;
  loaded.config = model_config_from_json(j.at("config"));
  loaded.seed = j.at("seed").get<std::uint64_t>();
  if (j.value("kind", "") != loaded.config.kind) {
    throw std::runtime_error(path + ": kind does not match the embedded config");
  }

  SeededRng rng(loaded.seed);
  loaded.model = make_forecaster(loaded.config, rng);

  const json& tensors = j.at("tensors");
  std::size_t assigned = 0;
  for (const ParamRegistry::Entry& e : loaded.model->registry().entries()) {
    auto it = tensors.find(e.name);
    if (it == tensors.end()) {
      throw std::runtime_error(path + ": missing tensor '" + e.name + "'");
    }
    const Index rows = it->at("rows").get<Index>();
    const Index cols = it->at("cols").get<Index>();
    if (rows != e.rows || cols != e.cols) {
      throw std::runtime_error(path + ": tensor '" + e.name + "' is " + std::to_string(rows) +
                               "x" + std::to_string(cols) + ", model expects " +
                               std::to_string(e.rows) + "x" + std::to_string(e.cols));
    }
    const auto data = it->at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != e.rows * e.cols) {
      throw std::runtime_error(path + ": tensor '" + e.name + "' has wrong element count");
    }
    std::copy(data.begin(), data.end(), e.data);
    ++assigned;
  }
  if (assigned != tensors.size()) {
    for (auto it = tensors.begin(); it != tensors.end(); ++it) {
      bool known = false;
      for (const auto& e : loaded.model->registry().entries()) {
        if (e.name == it.key()) {
          known = true;
          break;
        }
      }
      if (!known) throw std::runtime_error(path + ": unknown tensor '" + it.key() + "'");
    }
  }
  return loaded;
}

}  // namespace atrim
