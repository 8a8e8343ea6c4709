#include "config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace renyiflow::cli {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& path, const std::string& msg) {
  throw std::runtime_error("config error at '" + path + "': " + msg);
}

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& prefix) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!known.count(key)) config_error(prefix + key, "unknown config key");
  }
}

double get_number(const json& obj, const char* key, double fallback,
                  const std::string& prefix) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) config_error(prefix + key, "expected a number");
  return obj[key].get<double>();
}

std::size_t get_count(const json& obj, const char* key, std::size_t fallback,
                      const std::string& prefix) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_unsigned()) config_error(prefix + key, "expected a non-negative integer");
  return obj[key].get<std::size_t>();
}

std::string get_string(const json& obj, const char* key, const std::string& fallback,
                       const std::string& prefix) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string()) config_error(prefix + key, "expected a string");
  return obj[key].get<std::string>();
}

ModelSpec parse_model(const json& obj, const std::string& prefix) {
  if (!obj.is_object()) config_error(prefix, "expected an object with a 'type' tag");
  ModelSpec spec;
  spec.type = get_string(obj, "type", "", prefix);
  if (spec.type == "linear_gaussian_two_regime") {
    reject_unknown(obj, {"type", "sigma"}, prefix);
    spec.sigma = get_number(obj, "sigma", spec.sigma, prefix);
  } else if (spec.type == "lora") {
    reject_unknown(obj, {"type", "sigma", "d_in", "d_out", "rank", "base_scale"}, prefix);
    spec.sigma = get_number(obj, "sigma", spec.sigma, prefix);
    spec.d_in = get_count(obj, "d_in", spec.d_in, prefix);
    spec.d_out = get_count(obj, "d_out", spec.d_out, prefix);
    spec.rank = get_count(obj, "rank", spec.rank, prefix);
    spec.base_scale = get_number(obj, "base_scale", spec.base_scale, prefix);
  } else if (spec.type == "tiny_mlp") {
    reject_unknown(obj, {"type", "sigma", "d_in", "d_out", "hidden"}, prefix);
    spec.sigma = get_number(obj, "sigma", spec.sigma, prefix);
    spec.d_in = get_count(obj, "d_in", 1, prefix);
    spec.d_out = get_count(obj, "d_out", 1, prefix);
    spec.hidden = get_count(obj, "hidden", spec.hidden, prefix);
  } else if (spec.type == "discrete_table") {
    reject_unknown(obj, {"type", "h", "eps", "m"}, prefix);
    spec.h = get_number(obj, "h", spec.h, prefix);
    spec.eps = get_number(obj, "eps", spec.eps, prefix);
    spec.m = get_number(obj, "m", spec.m, prefix);
  } else {
    config_error(prefix + "type", "unknown model type '" + spec.type + "'");
  }
  return spec;
}

DatasetSpec parse_dataset(const json& obj, const std::string& prefix) {
  if (!obj.is_object()) config_error(prefix, "expected an object with a 'type' tag");
  DatasetSpec spec;
  spec.type = get_string(obj, "type", "", prefix);
  if (spec.type == "two_regime") {
    reject_unknown(obj, {"type", "n", "beta", "a", "epsilon", "sigma"}, prefix);
    spec.n = get_count(obj, "n", 100000, prefix);
    spec.beta = get_number(obj, "beta", spec.beta, prefix);
    spec.a = get_number(obj, "a", spec.a, prefix);
    spec.epsilon = get_number(obj, "epsilon", spec.epsilon, prefix);
    spec.sigma = get_number(obj, "sigma", spec.sigma, prefix);
  } else if (spec.type == "conflict") {
    reject_unknown(obj, {"type", "n", "slope", "sigma"}, prefix);
    spec.n = get_count(obj, "n", 512, prefix);
    spec.slope = get_number(obj, "slope", spec.slope, prefix);
    spec.sigma = get_number(obj, "sigma", 0.25, prefix);
  } else if (spec.type == "poisoned") {
    reject_unknown(obj, {"type", "n", "beta", "poison_fraction", "shift", "sigma"}, prefix);
    spec.n = get_count(obj, "n", 2000, prefix);
    spec.beta = get_number(obj, "beta", spec.beta, prefix);
    spec.poison_fraction = get_number(obj, "poison_fraction", spec.poison_fraction, prefix);
    spec.shift = get_number(obj, "shift", spec.shift, prefix);
    spec.sigma = get_number(obj, "sigma", spec.sigma, prefix);
  } else if (spec.type == "preference_conflict") {
    reject_unknown(obj, {"type", "n", "scale", "conflicting"}, prefix);
    spec.n = get_count(obj, "n", 256, prefix);
    spec.scale = get_number(obj, "scale", spec.scale, prefix);
    if (obj.contains("conflicting")) {
      if (!obj["conflicting"].is_boolean())
        config_error(prefix + "conflicting", "expected a boolean");
      spec.conflicting = obj["conflicting"].get<bool>();
    }
  } else if (spec.type == "csv" || spec.type == "preference_csv") {
    reject_unknown(obj, {"type", "path"}, prefix);
    spec.path = get_string(obj, "path", "", prefix);
    if (spec.path.empty()) config_error(prefix + "path", "a file path is required");
  } else {
    config_error(prefix + "type", "unknown dataset type '" + spec.type + "'");
  }
  return spec;
}

}  // namespace

AlphaConfig RunConfig::alpha_config(std::size_t dataset_size) const {
  AlphaConfig cfg;
  cfg.alpha = alpha;
  cfg.lambda = lambda;
  cfg.n = dataset_size;
  cfg.validate();
  return cfg;
}

TrainerConfig RunConfig::trainer_config() const {
  TrainerConfig cfg;
  cfg.steps = steps;
  cfg.batch_size = batch_size;
  cfg.learning_rate = learning_rate;
  cfg.beta1 = beta1;
  cfg.beta2 = beta2;
  cfg.adam_eps = adam_eps;
  cfg.weight_decay = weight_decay;
  cfg.regularizer = regularizer_kind();
  cfg.seed = seed;
  cfg.init_spread = init_spread;
  cfg.prior.tau = prior_tau;
  cfg.kde = kde_bandwidth ? KdeSpec::fixed(*kde_bandwidth) : KdeSpec::median_heuristic();
  cfg.validate();
  return cfg;
}

RegularizerKind RunConfig::regularizer_kind() const {
  if (regularizer == "prior") return RegularizerKind::kPrior;
  if (regularizer == "kde") return RegularizerKind::kKde;
  if (regularizer == "none") return RegularizerKind::kNone;
  throw std::runtime_error("config error at 'regularizer': expected prior, kde, or none");
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  json root;
  try {
    in >> root;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config parse failure in '" + path + "': " + e.what());
  }
  if (!root.is_object()) throw std::runtime_error("config root must be an object");

  static const std::set<std::string> known = {
      "alpha",      "lambda",       "num_particles", "prior_tau",    "regularizer",
      "kde_bandwidth", "learning_rate", "beta1",     "beta2",        "adam_eps",
      "weight_decay", "batch_size",  "steps",         "seed",         "init_spread",
      "beta_dpo",   "model",        "dataset"};
  reject_unknown(root, known, "");

  RunConfig cfg;
  cfg.alpha = get_number(root, "alpha", cfg.alpha, "");
  cfg.lambda = get_number(root, "lambda", cfg.lambda, "");
  cfg.num_particles = get_count(root, "num_particles", cfg.num_particles, "");
  cfg.prior_tau = get_number(root, "prior_tau", cfg.prior_tau, "");
  cfg.regularizer = get_string(root, "regularizer", cfg.regularizer, "");
  if (root.contains("kde_bandwidth")) {
    if (root["kde_bandwidth"].is_string() &&
        root["kde_bandwidth"].get<std::string>() == "median") {
      cfg.kde_bandwidth.reset();
    } else if (root["kde_bandwidth"].is_number()) {
      cfg.kde_bandwidth = root["kde_bandwidth"].get<double>();
    } else {
      config_error("kde_bandwidth", "expected a number or \"median\"");
    }
  }
  cfg.learning_rate = get_number(root, "learning_rate", cfg.learning_rate, "");
  cfg.beta1 = get_number(root, "beta1", cfg.beta1, "");
  cfg.beta2 = get_number(root, "beta2", cfg.beta2, "");
  cfg.adam_eps = get_number(root, "adam_eps", cfg.adam_eps, "");
  cfg.weight_decay = get_number(root, "weight_decay", cfg.weight_decay, "");
  cfg.batch_size = get_count(root, "batch_size", cfg.batch_size, "");
  cfg.steps = get_count(root, "steps", cfg.steps, "");
  if (root.contains("seed")) {
    if (!root["seed"].is_number_unsigned()) config_error("seed", "expected a non-negative integer");
    cfg.seed = root["seed"].get<std::uint64_t>();
  }
  cfg.init_spread = get_number(root, "init_spread", cfg.init_spread, "");
  cfg.beta_dpo = get_number(root, "beta_dpo", cfg.beta_dpo, "");
  if (root.contains("model")) cfg.model = parse_model(root["model"], "model.");
  if (root.contains("dataset")) cfg.dataset = parse_dataset(root["dataset"], "dataset.");
  return cfg;
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  json out;
  out["alpha"] = cfg.alpha;
  out["lambda"] = cfg.lambda;
  out["num_particles"] = cfg.num_particles;
  out["prior_tau"] = cfg.prior_tau;
  out["regularizer"] = cfg.regularizer;
  if (cfg.kde_bandwidth)
    out["kde_bandwidth"] = *cfg.kde_bandwidth;
  else
    out["kde_bandwidth"] = "median";
  out["learning_rate"] = cfg.learning_rate;
  out["beta1"] = cfg.beta1;
  out["beta2"] = cfg.beta2;
  out["adam_eps"] = cfg.adam_eps;
  out["weight_decay"] = cfg.weight_decay;
  out["batch_size"] = cfg.batch_size;
  out["steps"] = cfg.steps;
  out["seed"] = cfg.seed;
  out["init_spread"] = cfg.init_spread;
  out["beta_dpo"] = cfg.beta_dpo;
  if (cfg.model) {
    json m;
    m["type"] = cfg.model->type;
    if (cfg.model->type == "linear_gaussian_two_regime") {
      m["sigma"] = cfg.model->sigma;
    } else if (cfg.model->type == "lora") {
      m["sigma"] = cfg.model->sigma;
      m["d_in"] = cfg.model->d_in;
      m["d_out"] = cfg.model->d_out;
      m["rank"] = cfg.model->rank;
      m["base_scale"] = cfg.model->base_scale;
    } else if (cfg.model->type == "tiny_mlp") {
      m["sigma"] = cfg.model->sigma;
      m["d_in"] = cfg.model->d_in;
      m["d_out"] = cfg.model->d_out;
      m["hidden"] = cfg.model->hidden;
    } else if (cfg.model->type == "discrete_table") {
      m["h"] = cfg.model->h;
      m["eps"] = cfg.model->eps;
      m["m"] = cfg.model->m;
    }
    out["model"] = m;
  }
  if (cfg.dataset) {
    json d;
    d["type"] = cfg.dataset->type;
    if (cfg.dataset->type == "two_regime") {
      d["n"] = cfg.dataset->n;
      d["beta"] = cfg.dataset->beta;
      d["a"] = cfg.dataset->a;
      d["epsilon"] = cfg.dataset->epsilon;
      d["sigma"] = cfg.dataset->sigma;
    } else if (cfg.dataset->type == "conflict") {
      d["n"] = cfg.dataset->n;
      d["slope"] = cfg.dataset->slope;
      d["sigma"] = cfg.dataset->sigma;
    } else if (cfg.dataset->type == "poisoned") {
      d["n"] = cfg.dataset->n;
      d["beta"] = cfg.dataset->beta;
      d["poison_fraction"] = cfg.dataset->poison_fraction;
      d["shift"] = cfg.dataset->shift;
      d["sigma"] = cfg.dataset->sigma;
    } else if (cfg.dataset->type == "preference_conflict") {
      d["n"] = cfg.dataset->n;
      d["scale"] = cfg.dataset->scale;
      d["conflicting"] = cfg.dataset->conflicting;
    } else {
      d["path"] = cfg.dataset->path;
    }
    out["dataset"] = d;
  }
  return out;
}

}  // namespace renyiflow::cli
