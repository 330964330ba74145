#include "stainkit/config_json.hpp"

#include "stainkit/errors.hpp"

namespace stainkit {
namespace {

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("config key \"") + key + "\": " + e.what());
    }
  }
}

}  // namespace

void require_keys(const nlohmann::json& j,
                  const std::set<std::string>& allowed,
                  const std::string& context) {
  if (!j.is_object()) {
    throw ParseError(context + ": expected a JSON object");
  }
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw ParseError(context + ": unknown key \"" + item.key() + "\"");
    }
  }
}

PerturbParams perturb_params_from_json(const nlohmann::json& j,
                                       PerturbParams base) {
  require_keys(j, {"sigma1", "sigma2", "n_augment", "seed"}, "perturb");
  PerturbParams p = base;
  read_if(j, "sigma1", p.sigma1);
  read_if(j, "sigma2", p.sigma2);
  read_if(j, "n_augment", p.n_augment);
  read_if(j, "seed", p.seed);
  validate(p);
  return p;
}

SnmfConfig snmf_config_from_json(const nlohmann::json& j, SnmfConfig base) {
  require_keys(j, {"sparsity_lambda", "max_iters", "tol", "seed"}, "snmf");
  SnmfConfig c = base;
  read_if(j, "sparsity_lambda", c.sparsity_lambda);
  read_if(j, "max_iters", c.max_iters);
  read_if(j, "tol", c.tol);
  read_if(j, "seed", c.seed);
  if (c.sparsity_lambda < 0.0 || c.max_iters < 1 || !(c.tol > 0.0)) {
    throw ParseError("snmf: invalid values");
  }
  return c;
}

std::string consistency_reduce_to_string(ConsistencyReduce r) {
  switch (r) {
    case ConsistencyReduce::mean: return "mean";
    case ConsistencyReduce::sum: return "sum";
    case ConsistencyReduce::single: return "single";
  }
  return "mean";
}

ConsistencyReduce consistency_reduce_from_string(const std::string& s) {
  if (s == "mean") return ConsistencyReduce::mean;
  if (s == "sum") return ConsistencyReduce::sum;
  if (s == "single") return ConsistencyReduce::single;
  throw ParseError("reduce must be one of mean|sum|single, got \"" + s + "\"");
}

TrainConfig train_config_from_json(const nlohmann::json& j,
                                   TrainConfig base) {
  require_keys(j,
               {"lr", "epochs", "batch_size", "perturb", "use_consistency",
                "reduce", "seed", "input_side", "hidden_dim", "feature_dim",
                "stain_method", "snmf"},
               "train");
  TrainConfig c = base;
  read_if(j, "lr", c.lr);
  read_if(j, "epochs", c.epochs);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "use_consistency", c.use_consistency);
  read_if(j, "seed", c.seed);
  read_if(j, "input_side", c.input_side);
  read_if(j, "hidden_dim", c.hidden_dim);
  read_if(j, "feature_dim", c.feature_dim);
  if (j.contains("perturb")) {
    c.perturb = perturb_params_from_json(j.at("perturb"), c.perturb);
  }
  if (j.contains("snmf")) c.snmf = snmf_config_from_json(j.at("snmf"), c.snmf);
  if (j.contains("reduce")) {
    c.reduce = consistency_reduce_from_string(j.at("reduce").get<std::string>());
  }
  if (j.contains("stain_method")) {
    c.stain_method =
        stain_method_from_string(j.at("stain_method").get<std::string>());
  }
  if (!(c.lr > 0.0)) throw ParseError("train: lr must be > 0");
  if (c.epochs < 1 || c.batch_size < 1 || c.input_side < 1 ||
      c.hidden_dim < 1 || c.feature_dim < 1) {
    throw ParseError("train: counts must be >= 1");
  }
  return c;
}

nlohmann::ordered_json to_json(const PerturbParams& p) {
  nlohmann::ordered_json j;
  j["sigma1"] = p.sigma1;
  j["sigma2"] = p.sigma2;
  j["n_augment"] = p.n_augment;
  j["seed"] = p.seed;
  return j;
}

nlohmann::ordered_json to_json(const SnmfConfig& c) {
  nlohmann::ordered_json j;
  j["sparsity_lambda"] = c.sparsity_lambda;
  j["max_iters"] = c.max_iters;
  j["tol"] = c.tol;
  j["seed"] = c.seed;
  return j;
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["perturb"] = to_json(c.perturb);
  j["use_consistency"] = c.use_consistency;
  j["reduce"] = consistency_reduce_to_string(c.reduce);
  j["seed"] = c.seed;
  j["input_side"] = c.input_side;
  j["hidden_dim"] = c.hidden_dim;
  j["feature_dim"] = c.feature_dim;
  j["stain_method"] = to_string(c.stain_method);
  j["snmf"] = to_json(c.snmf);
  return j;
}

}  // namespace stainkit
