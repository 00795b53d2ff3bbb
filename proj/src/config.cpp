#include "gradmask/config.hpp"

#include <fstream>
#include <sstream>

#include "gradmask/errors.hpp"
#include "gradmask/metrics.hpp"

namespace gradmask {

using nlohmann::json;

namespace {

std::string join_key(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void check_type(const json& def, const json& val, const std::string& key) {
  bool ok = false;
  if (def.is_boolean()) {
    ok = val.is_boolean();
  } else if (def.is_number_float()) {
    ok = val.is_number();
  } else if (def.is_number_unsigned()) {
    ok = val.is_number_unsigned() || (val.is_number_integer() && val.get<long long>() >= 0);
  } else if (def.is_number_integer()) {
    ok = val.is_number_integer();
  } else if (def.is_string()) {
    ok = val.is_string();
  } else if (def.is_object()) {
    ok = val.is_object();
  }
  if (!ok) throw ConfigError("config key \"" + key + "\" has the wrong type (expected " + def.type_name() + ")");
}

void strict_merge(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config section \"" + (prefix.empty() ? "<root>" : prefix) + "\" must be an object");
  for (const auto& [key, val] : user.items()) {
    const std::string full = join_key(prefix, key);
    auto it = base.find(key);
    if (it == base.end()) throw ConfigError("unknown config key \"" + full + "\"");
    check_type(*it, val, full);
    if (it->is_object()) {
      strict_merge(*it, val, full);
    } else if (it->is_number_float()) {
      *it = val.get<double>();
    } else {
      *it = val;
    }
  }
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

json RunConfig::to_json() const {
  const auto& s = data.synthetic;
  const auto& m = model;
  const auto& d = model.decay;
  return json{
      {"seed", seed},
      {"data",
       {{"source", data.source},
        {"path", data.path},
        {"synthetic",
         {{"kind", data.synthetic_kind},
          {"count", s.count},
          {"n_min", s.n_min},
          {"n_max", s.n_max},
          {"p_edge", s.p_edge},
          {"d_in", s.d_in},
          {"seed", s.seed}}},
        {"split",
         {{"mode", data.split_mode},
          {"train", data.split_train},
          {"val", data.split_val},
          {"test", data.split_test},
          {"seed", data.split_seed}}},
        {"low_resource", {{"fraction", data.low_resource_fraction}, {"seed", data.low_resource_seed}}}}},
      {"model",
       {{"layers", m.layers},
        {"hidden", m.hidden},
        {"heads", m.heads},
        {"ffn_multiplier", m.ffn_multiplier},
        {"dropout", m.dropout},
        {"attention_dropout", m.attention_dropout},
        {"pe", to_string(m.pe)},
        {"pe_dim", m.pe_dim},
        {"mpnn", to_string(m.mpnn)},
        {"gcn_activation", to_string(m.gcn_activation)},
        {"index", to_string(m.index)},
        {"layer_norm_eps", m.layer_norm_eps}}},
      {"decay",
       {{"enabled", d.enabled},
        {"lambda", d.lambda},
        {"decay_fn", to_string(d.decay_fn)},
        {"linear_endpoint", d.linear_endpoint},
        {"zero_mode", to_string(d.zero_mode)},
        {"unreachable_policy", to_string(d.unreachable.kind)},
        {"unreachable_value", d.unreachable.fixed_value}}},
      {"optim",
       {{"optimizer", optim.optimizer},
        {"lr", optim.lr},
        {"beta1", optim.adam.beta1},
        {"beta2", optim.adam.beta2},
        {"eps", optim.adam.eps},
        {"weight_decay", optim.adam.weight_decay},
        {"grad_clip", optim.adam.grad_clip},
        {"schedule", to_string(optim.schedule)},
        {"warmup_fraction", optim.warmup_fraction}}},
      {"train",
       {{"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"select_metric", train.select_metric},
        {"eval_workers", train.eval_workers}}},
      {"output", {{"dir", output_dir}}},
  };
}

RunConfig RunConfig::from_json(const json& doc) {
  json merged = RunConfig{}.to_json();
  strict_merge(merged, doc, "");
  RunConfig c;
  c.seed = merged["seed"].get<std::uint64_t>();
  const auto& jd = merged["data"];
  c.data.source = jd["source"].get<std::string>();
  c.data.path = jd["path"].get<std::string>();
  const auto& js = jd["synthetic"];
  c.data.synthetic_kind = js["kind"].get<std::string>();
  c.data.synthetic.count = js["count"].get<std::size_t>();
  c.data.synthetic.n_min = js["n_min"].get<std::size_t>();
  c.data.synthetic.n_max = js["n_max"].get<std::size_t>();
  c.data.synthetic.p_edge = js["p_edge"].get<double>();
  c.data.synthetic.d_in = js["d_in"].get<std::size_t>();
  c.data.synthetic.seed = js["seed"].get<std::uint64_t>();
  const auto& jsp = jd["split"];
  c.data.split_mode = jsp["mode"].get<std::string>();
  c.data.split_train = jsp["train"].get<std::size_t>();
  c.data.split_val = jsp["val"].get<std::size_t>();
  c.data.split_test = jsp["test"].get<std::size_t>();
  c.data.split_seed = jsp["seed"].get<std::uint64_t>();
  c.data.low_resource_fraction = jd["low_resource"]["fraction"].get<double>();
  c.data.low_resource_seed = jd["low_resource"]["seed"].get<std::uint64_t>();

  const auto& jm = merged["model"];
  c.model.layers = jm["layers"].get<std::size_t>();
  c.model.hidden = jm["hidden"].get<std::size_t>();
  c.model.heads = jm["heads"].get<std::size_t>();
  c.model.ffn_multiplier = jm["ffn_multiplier"].get<double>();
  c.model.dropout = jm["dropout"].get<double>();
  c.model.attention_dropout = jm["attention_dropout"].get<double>();
  c.model.pe = pe_kind_from_string(jm["pe"].get<std::string>());
  c.model.pe_dim = jm["pe_dim"].get<std::size_t>();
  c.model.mpnn = mpnn_kind_from_string(jm["mpnn"].get<std::string>());
  c.model.gcn_activation = activation_from_string(jm["gcn_activation"].get<std::string>());
  c.model.index = index_kind_from_string(jm["index"].get<std::string>());
  c.model.layer_norm_eps = jm["layer_norm_eps"].get<double>();

  const auto& jdec = merged["decay"];
  auto& d = c.model.decay;
  d.enabled = jdec["enabled"].get<bool>();
  d.lambda = jdec["lambda"].get<double>();
  d.decay_fn = decay_fn_from_string(jdec["decay_fn"].get<std::string>());
  d.linear_endpoint = jdec["linear_endpoint"].get<double>();
  d.zero_mode = zero_mode_from_string(jdec["zero_mode"].get<std::string>());
  d.unreachable.kind = unreachable_kind_from_string(jdec["unreachable_policy"].get<std::string>());
  d.unreachable.fixed_value = jdec["unreachable_value"].get<double>();

  const auto& jo = merged["optim"];
  c.optim.optimizer = jo["optimizer"].get<std::string>();
  c.optim.lr = jo["lr"].get<double>();
  c.optim.adam.beta1 = jo["beta1"].get<double>();
  c.optim.adam.beta2 = jo["beta2"].get<double>();
  c.optim.adam.eps = jo["eps"].get<double>();
  c.optim.adam.weight_decay = jo["weight_decay"].get<double>();
  c.optim.adam.grad_clip = jo["grad_clip"].get<double>();
  c.optim.schedule = schedule_kind_from_string(jo["schedule"].get<std::string>());
  c.optim.warmup_fraction = jo["warmup_fraction"].get<double>();

  const auto& jt = merged["train"];
  c.train.epochs = jt["epochs"].get<std::size_t>();
  c.train.batch_size = jt["batch_size"].get<std::size_t>();
  c.train.select_metric = jt["select_metric"].get<std::string>();
  c.train.eval_workers = jt["eval_workers"].get<std::size_t>();
  c.output_dir = merged["output"]["dir"].get<std::string>();
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (data.source != "synthetic" && data.source != "file") throw ConfigError("data.source must be synthetic or file");
  if (data.source == "file" && data.path.empty()) throw ConfigError("data.path is required when data.source is file");
  if (data.synthetic_kind != "triangle" && data.synthetic_kind != "hopcount" && data.synthetic_kind != "node_triangle") {
    throw ConfigError("data.synthetic.kind must be triangle, hopcount or node_triangle");
  }
  if (data.split_mode != "ratio" && data.split_mode != "counts") throw ConfigError("data.split.mode must be ratio or counts");
  if (!(data.low_resource_fraction > 0.0 && data.low_resource_fraction <= 1.0)) {
    throw ConfigError("data.low_resource.fraction must lie in (0, 1]");
  }
  model.validate();
  if (optim.optimizer != "adamw" && optim.optimizer != "adam") throw ConfigError("optim.optimizer must be adamw or adam");
  if (!(optim.lr > 0.0)) throw ConfigError("optim.lr must be positive");
  if (!(optim.adam.beta1 >= 0.0 && optim.adam.beta1 < 1.0)) throw ConfigError("optim.beta1 must lie in [0, 1)");
  if (!(optim.adam.beta2 >= 0.0 && optim.adam.beta2 < 1.0)) throw ConfigError("optim.beta2 must lie in [0, 1)");
  if (!(optim.adam.eps > 0.0)) throw ConfigError("optim.eps must be positive");
  if (!(optim.adam.weight_decay >= 0.0)) throw ConfigError("optim.weight_decay must be non-negative");
  if (!(optim.adam.grad_clip >= 0.0)) throw ConfigError("optim.grad_clip must be non-negative");
  if (!(optim.warmup_fraction >= 0.0 && optim.warmup_fraction < 1.0)) {
    throw ConfigError("optim.warmup_fraction must lie in [0, 1)");
  }
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (train.eval_workers < 1) throw ConfigError("train.eval_workers must be >= 1");
  if (train.select_metric != "auto" && train.select_metric != "accuracy" && train.select_metric != "auroc" &&
      train.select_metric != "mae" && train.select_metric != "loss") {
    throw ConfigError("train.select_metric must be auto, accuracy, auroc, mae or loss");
  }
}

std::string RunConfig::hash() const {
  json doc = to_json();
  doc.erase("output");
  std::ostringstream os;
  os << std::hex << fnv1a(doc.dump());
  return os.str();
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override \"" + assignment + "\" is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  const json defaults = RunConfig{}.to_json();
  const json* schema = &defaults;
  json* target = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    auto it = schema->find(part);
    if (part.empty() || it == schema->end()) throw ConfigError("unknown config key \"" + key + "\"");
    if (dot == std::string::npos) {
      check_type(*it, value, key);
      (*target)[part] = value;
      return;
    }
    if (!it->is_object()) throw ConfigError("config key \"" + key.substr(0, dot) + "\" is not a section");
    schema = &*it;
    if (!target->contains(part)) (*target)[part] = json::object();
    target = &(*target)[part];
    if (!target->is_object()) throw ConfigError("config section \"" + key.substr(0, dot) + "\" must be an object");
    start = dot + 1;
  }
}

RunConfig make_run_config(const json& doc, const std::vector<std::string>& overrides) {
  json working = doc.is_null() ? json::object() : doc;
  for (const auto& o : overrides) apply_override(working, o);
  return RunConfig::from_json(working);
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return make_run_config(doc, overrides);
}

}  // namespace gradmask
