#include "cift/config.hpp"

#include "cift/io.hpp"

#include <json.hpp>

#include <set>

namespace cift::config {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read_int(const json& obj, const std::string& where, const char* key, T& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
  if constexpr (std::is_unsigned_v<T>) {
    if (v.is_number_unsigned()) {
      out = v.get<T>();
      return;
    }
    if (v.get<long long>() < 0) throw ConfigError(where + "." + key + ": must be non-negative");
  }
  out = v.get<T>();
}

void read_real(const json& obj, const std::string& where, const char* key, double& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  out = v.get<double>();
}

void read_bool(const json& obj, const std::string& where, const char* key, bool& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(where + "." + key + ": expected true or false");
  out = v.get<bool>();
}

void read_string(const json& obj, const std::string& where, const char* key, std::string& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
  out = v.get<std::string>();
}

std::uint64_t dataset_seed(std::uint64_t seed) { return Rng(seed).split(0xda7a5e7).seed(); }

}  // namespace

datagen::GenParams default_dataset() {
  datagen::GenParams p;
  p.num_identities = 32;
  p.per_id_per_modality = 8;
  p.dim = 32;
  p.center_scale = 1.0;
  p.modality_offset_scale = 1.0;
  p.noise_scale = 1.0;
  return p;
}

void ExperimentConfig::apply_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  dataset.seed = dataset_seed(s);
}

ExperimentConfig parse(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  check_keys(root, "config", {"seed", "output_dir", "dataset", "dataset_file", "train"});
  ExperimentConfig c;
  read_int(root, "config", "seed", c.seed);
  read_string(root, "config", "output_dir", c.output_dir);
  read_string(root, "config", "dataset_file", c.dataset_file);
  if (root.contains("dataset")) {
    const json& d = root.at("dataset");
    check_keys(d, "dataset", {"num_identities", "per_id_per_modality", "dim", "center_scale",
                              "modality_offset_scale", "noise_scale"});
    read_int(d, "dataset", "num_identities", c.dataset.num_identities);
    read_int(d, "dataset", "per_id_per_modality", c.dataset.per_id_per_modality);
    read_int(d, "dataset", "dim", c.dataset.dim);
    read_real(d, "dataset", "center_scale", c.dataset.center_scale);
    read_real(d, "dataset", "modality_offset_scale", c.dataset.modality_offset_scale);
    read_real(d, "dataset", "noise_scale", c.dataset.noise_scale);
  }
  if (root.contains("train")) {
    const json& t = root.at("train");
    const std::string w = "train";
    check_keys(t, w, {"epochs", "steps_per_epoch", "lr_base", "warmup_epochs", "decay_epochs",
                      "decay_factor", "momentum", "weight_decay", "k", "tau_hom", "tau_het", "ablation",
                      "mc_samples", "batch_identities", "batch_per_modality", "embed_dim",
                      "train_identities", "eval_shots", "loss"});
    auto& tc = c.train;
    read_int(t, w, "epochs", tc.epochs);
    read_int(t, w, "steps_per_epoch", tc.steps_per_epoch);
    read_real(t, w, "lr_base", tc.lr_base);
    read_int(t, w, "warmup_epochs", tc.warmup_epochs);
    if (t.contains("decay_epochs")) {
      const json& de = t.at("decay_epochs");
      if (!de.is_array()) throw ConfigError("train.decay_epochs: expected an array of integers");
      tc.decay_epochs.clear();
      for (const json& e : de) {
        if (!e.is_number_integer()) throw ConfigError("train.decay_epochs: expected an array of integers");
        tc.decay_epochs.push_back(e.get<int>());
      }
    }
    read_real(t, w, "decay_factor", tc.decay_factor);
    read_real(t, w, "momentum", tc.momentum);
    read_real(t, w, "weight_decay", tc.weight_decay);
    read_int(t, w, "k", tc.k);
    read_real(t, w, "tau_hom", tc.tau_hom);
    read_real(t, w, "tau_het", tc.tau_het);
    read_int(t, w, "mc_samples", tc.mc_samples);
    read_int(t, w, "batch_identities", tc.batch_identities);
    read_int(t, w, "batch_per_modality", tc.batch_per_modality);
    read_int(t, w, "embed_dim", tc.embed_dim);
    read_int(t, w, "train_identities", tc.train_identities);
    read_int(t, w, "eval_shots", tc.eval_shots);
    if (t.contains("ablation")) {
      const json& a = t.at("ablation");
      check_keys(a, "train.ablation", {"gft", "ubs", "h2g", "cri"});
      read_bool(a, "train.ablation", "gft", tc.ablation.gft);
      read_bool(a, "train.ablation", "ubs", tc.ablation.ubs);
      read_bool(a, "train.ablation", "h2g", tc.ablation.h2g);
      read_bool(a, "train.ablation", "cri", tc.ablation.cri);
    }
    if (t.contains("loss")) {
      const json& l = t.at("loss");
      check_keys(l, "train.loss", {"rho_eu", "rho_kl", "include_anchor"});
      read_real(l, "train.loss", "rho_eu", tc.loss.rho_eu);
      read_real(l, "train.loss", "rho_kl", tc.loss.rho_kl);
      read_bool(l, "train.loss", "include_anchor", tc.loss.include_anchor);
    }
  }
  c.apply_seed(c.seed);
  try {
    c.train.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  const auto& d = c.dataset;
  if (d.num_identities < 4 || d.per_id_per_modality < 1 || d.dim < 2) {
    throw ConfigError("dataset: need num_identities >= 4, per_id_per_modality >= 1, dim >= 2");
  }
  if (!(d.center_scale >= 0.0) || !(d.modality_offset_scale >= 0.0) || !(d.noise_scale >= 0.0)) {
    throw ConfigError("dataset: scales must be non-negative");
  }
  if (c.dataset_file.empty()) {
    const int train_ids = c.train.train_identities > 0 ? c.train.train_identities : d.num_identities / 2;
    if (train_ids < 2 || train_ids >= d.num_identities) {
      throw ConfigError("train.train_identities must leave at least two identities on each side");
    }
    if (c.train.batch_identities > train_ids) {
      throw ConfigError("train.batch_identities exceeds the training identities");
    }
    if (c.train.batch_per_modality > d.per_id_per_modality) {
      throw ConfigError("train.batch_per_modality exceeds dataset.per_id_per_modality");
    }
    if (c.train.eval_shots > d.per_id_per_modality) {
      throw ConfigError("train.eval_shots exceeds dataset.per_id_per_modality");
    }
  }
  if (c.output_dir.empty()) throw ConfigError("config.output_dir: must not be empty");
  return c;
}

ExperimentConfig load(const std::string& path) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return parse(text);
}

std::string dump(const ExperimentConfig& c) {
  const auto& t = c.train;
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  if (!c.dataset_file.empty()) j["dataset_file"] = c.dataset_file;
  j["dataset"] = {{"num_identities", c.dataset.num_identities},
                  {"per_id_per_modality", c.dataset.per_id_per_modality},
                  {"dim", c.dataset.dim},
                  {"center_scale", c.dataset.center_scale},
                  {"modality_offset_scale", c.dataset.modality_offset_scale},
                  {"noise_scale", c.dataset.noise_scale}};
  j["train"] = {{"epochs", t.epochs},
                {"steps_per_epoch", t.steps_per_epoch},
                {"lr_base", t.lr_base},
                {"warmup_epochs", t.warmup_epochs},
                {"decay_epochs", t.decay_epochs},
                {"decay_factor", t.decay_factor},
                {"momentum", t.momentum},
                {"weight_decay", t.weight_decay},
                {"k", t.k},
                {"tau_hom", t.tau_hom},
                {"tau_het", t.tau_het},
                {"mc_samples", t.mc_samples},
                {"batch_identities", t.batch_identities},
                {"batch_per_modality", t.batch_per_modality},
                {"embed_dim", t.embed_dim},
                {"train_identities", t.train_identities},
                {"eval_shots", t.eval_shots},
                {"ablation", {{"gft", t.ablation.gft}, {"ubs", t.ablation.ubs}, {"h2g", t.ablation.h2g},
                              {"cri", t.ablation.cri}}},
                {"loss", {{"rho_eu", t.loss.rho_eu}, {"rho_kl", t.loss.rho_kl},
                          {"include_anchor", t.loss.include_anchor}}}};
  return j.dump(2);
}

datagen::Dataset make_dataset(const ExperimentConfig& c) {
  if (!c.dataset_file.empty()) return datagen::load_json(c.dataset_file);
  return datagen::gen_synthetic_dataset(c.dataset);
}

}  // namespace cift::config
